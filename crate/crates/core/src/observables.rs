//! Currents, tagged-particle readouts, fluctuation fields and the
//! Boltzmann–Gibbs time integral.
//!
//! Currents are counted from executed jumps, never reconstructed from
//! spatial sums of occupancies: on a ring those sums pick up the current
//! through a far bond. All real-valued summation limits are floored.

use thiserror::Error;

use crate::engine::{Direction, EventRecord, Simulator};
use crate::lattice::{Configuration, LatticeError, SimParams, TimeScale};
use crate::test_functions::TestFunction;

/// Relative tolerance of the debug-build recomputation of the running sum.
#[cfg(debug_assertions)]
const BG_RECHECK_TOL: f64 = 1e-9;
#[cfg(debug_assertions)]
const BG_RECHECK_INTERVAL: u64 = 1 << 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("no {0} registered")]
    Unregistered(String),
    #[error("the configuration has no tagged particle")]
    NoTagged,
    #[error("readout requires p > q (p = {p})")]
    NotAsymmetric { p: f64 },
    #[error("readout requires positive velocity v = (p - q)(1 - 2 alpha), got {v}")]
    NonPositiveVelocity { v: f64 },
    #[error("readout requires density alpha > 0")]
    ZeroDensity,
    #[error("observable is not defined on the {0} time scale")]
    WrongTimeScale(TimeScale),
    #[error("test function {label} spans {needed} sites but the ring has {len}")]
    SupportExceedsRing { label: String, needed: i64, len: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Static,
    /// Shifted by `floor(v tau)`, `tau` the physical time.
    Comoving,
}

/// Net right-minus-left executed crossings of the bond `[x, x + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BondCurrent {
    bond: i64,
    left: usize,
    right: usize,
    count: i64,
}

impl BondCurrent {
    pub fn new(bond: i64, len: usize) -> Self {
        let l = len as i64;
        BondCurrent {
            bond,
            left: bond.rem_euclid(l) as usize,
            right: (bond + 1).rem_euclid(l) as usize,
            count: 0,
        }
    }

    pub fn bond(&self) -> i64 {
        self.bond
    }

    pub fn count(&self) -> i64 {
        self.count
    }

    #[inline]
    pub(crate) fn on_event(&mut self, event: &EventRecord) {
        if !event.executed {
            return;
        }
        match event.direction {
            Direction::Right if event.site == self.left => self.count += 1,
            Direction::Left if event.site == self.right => self.count -= 1,
            _ => {}
        }
    }
}

/// Current through the bond `[y, y + 1]`, `y = x + floor(v tau)`, counted as
/// particles now to the right of the moving bond minus particles initially
/// to the right of `[x, x + 1]`.
///
/// Executed crossings of the current bond count ±1. When the offset grows by
/// one the site `y + 1` leaves the right half-line and its occupancy at that
/// instant is subtracted; when it shrinks the site `y` joins it and is added.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingBondCurrent {
    anchor: i64,
    velocity: f64,
    offset: i64,
    count: i64,
}

impl MovingBondCurrent {
    pub fn new(anchor: i64, velocity: f64) -> Self {
        MovingBondCurrent {
            anchor,
            velocity,
            offset: 0,
            count: 0,
        }
    }

    pub fn anchor(&self) -> i64 {
        self.anchor
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn count(&self) -> i64 {
        self.count
    }

    fn sweep(&mut self, time: f64, config: &Configuration) {
        let target = (self.velocity * time).floor() as i64;
        while self.offset < target {
            self.offset += 1;
            self.count -= config.eta(self.anchor + self.offset) as i64;
        }
        while self.offset > target {
            self.count += config.eta(self.anchor + self.offset) as i64;
            self.offset -= 1;
        }
    }

    #[inline]
    pub(crate) fn on_event(&mut self, event: &EventRecord, config: &Configuration) {
        if self.velocity != 0.0 {
            self.sweep(event.time, config);
        }
        if !event.executed {
            return;
        }
        let y = self.anchor + self.offset;
        match event.direction {
            Direction::Right if event.site == config.site(y) => self.count += 1,
            Direction::Left if event.site == config.site(y + 1) => self.count -= 1,
            _ => {}
        }
    }

    pub(crate) fn on_checkpoint(&mut self, time: f64, config: &Configuration) {
        if self.velocity != 0.0 {
            self.sweep(time, config);
        }
    }
}

/// Integer coordinates `x` with `x/N` (shifted by `shift`) inside the
/// support of `h`.
fn support_window(
    h: &TestFunction,
    n: f64,
    shift: i64,
    len: usize,
) -> Result<(i64, i64), ObservableError> {
    let Some((a, b)) = h.support() else {
        return Err(ObservableError::SupportExceedsRing {
            label: h.label(),
            needed: i64::MAX,
            len,
        });
    };
    let lo = (a * n).ceil() as i64 + shift;
    let hi = (b * n).floor() as i64 + shift;
    let needed = hi - lo + 1;
    if needed > len as i64 {
        return Err(ObservableError::SupportExceedsRing {
            label: h.label(),
            needed,
            len,
        });
    }
    Ok((lo, hi))
}

/// Incremental accumulator of `int S(eta_s) ds` with
/// `S(eta) = sum_x H(x/N)(eta(x) - alpha)(eta(x+1) - alpha)`.
///
/// `S` changes only through the three terms touching an executed jump's
/// bond, so each jump costs O(1). The time integral is updated lazily at
/// executed jumps and checkpoints.
#[derive(Debug, Clone)]
pub struct BgAccumulator {
    h: TestFunction,
    exponent: f64,
    alpha: f64,
    /// `N^b / sqrt(N) / speed`.
    scale: f64,
    start: i64,
    start_site: usize,
    weights: Vec<f64>,
    running: f64,
    integral: f64,
    last_time: f64,
    #[cfg(debug_assertions)]
    updates: u64,
}

impl BgAccumulator {
    pub fn new(
        h: TestFunction,
        prefactor_exponent: f64,
        params: &SimParams,
        config: &Configuration,
    ) -> Result<Self, ObservableError> {
        let n = params.n as f64;
        let (lo, hi) = support_window(&h, n, 0, config.len())?;
        let weights: Vec<f64> = (lo..=hi).map(|x| h.eval(x as f64 / n)).collect();
        let mut acc = BgAccumulator {
            scale: n.powf(prefactor_exponent) / n.sqrt() / params.speed(),
            h,
            exponent: prefactor_exponent,
            alpha: params.alpha,
            start: lo,
            start_site: config.site(lo),
            weights,
            running: 0.0,
            integral: 0.0,
            last_time: 0.0,
            #[cfg(debug_assertions)]
            updates: 0,
        };
        acc.running = acc.recompute(config);
        Ok(acc)
    }

    pub fn test_function(&self) -> &TestFunction {
        &self.h
    }

    pub fn prefactor_exponent(&self) -> f64 {
        self.exponent
    }

    /// Current value of `S(eta)`.
    pub fn running_sum(&self) -> f64 {
        self.running
    }

    /// `N^b / sqrt(N) * int_0^t S(eta_s) ds` in macroscopic time, up to the
    /// last checkpoint.
    pub fn value(&self) -> f64 {
        self.scale * self.integral
    }

    /// `S(eta)` from scratch.
    pub fn recompute(&self, config: &Configuration) -> f64 {
        let a = self.alpha;
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let x = self.start + i as i64;
                w * (config.eta(x) as f64 - a) * (config.eta(x + 1) as f64 - a)
            })
            .sum()
    }

    #[inline]
    fn window_index(&self, site: usize, len: usize) -> Option<usize> {
        let d = if site >= self.start_site {
            site - self.start_site
        } else {
            site + len - self.start_site
        };
        (d < self.weights.len()).then_some(d)
    }

    #[inline]
    pub(crate) fn on_event(&mut self, event: &EventRecord, config: &Configuration) {
        if !event.executed {
            return;
        }
        let len = config.len();
        let to = event.target(len);
        // lower site of the jump bond; the jump swaps eta(lo) and eta(lo + 1)
        let lo = match event.direction {
            Direction::Right => event.site,
            Direction::Left => to,
        };
        let hi = if lo + 1 == len { 0 } else { lo + 1 };
        let eta = |s: usize| config.get(s) as u8 as f64;
        let swapped = |s: usize| {
            if s == lo {
                eta(hi)
            } else if s == hi {
                eta(lo)
            } else {
                eta(s)
            }
        };
        let a = self.alpha;
        let mut delta = 0.0;
        for k in 0..3 {
            let x = (lo + len + k - 1) % len;
            if let Some(i) = self.window_index(x, len) {
                let y = if x + 1 == len { 0 } else { x + 1 };
                let old = (eta(x) - a) * (eta(y) - a);
                let new = (swapped(x) - a) * (swapped(y) - a);
                delta += self.weights[i] * (new - old);
            }
        }
        if delta != 0.0 {
            self.integral += self.running * (event.time - self.last_time);
            self.last_time = event.time;
            self.running += delta;
        }
        #[cfg(debug_assertions)]
        {
            self.updates += 1;
            if self.updates % BG_RECHECK_INTERVAL == 0 {
                let mut after = config.clone();
                after.move_particle(event.site, to);
                let fresh = self.recompute(&after);
                let scale = self.weights.iter().map(|w| w.abs()).sum::<f64>().max(1.0);
                assert!(
                    (fresh - self.running).abs() <= BG_RECHECK_TOL * scale,
                    "incremental S {} drifted from recomputed {}",
                    self.running,
                    fresh
                );
            }
        }
    }

    pub(crate) fn on_checkpoint(&mut self, time: f64, _config: &Configuration) {
        self.integral += self.running * (time - self.last_time);
        self.last_time = time;
    }
}

/// Net crossings of the registered bond `[x, x + 1]` since time 0.
pub fn bond_current(sim: &Simulator, x: i64) -> Result<i64, ObservableError> {
    sim.bond(x)
        .map(BondCurrent::count)
        .ok_or_else(|| ObservableError::Unregistered(format!("bond [{x}, {}]", x + 1)))
}

pub fn moving_bond_current(sim: &Simulator, x: i64) -> Result<i64, ObservableError> {
    sim.moving_bond(x)
        .map(MovingBondCurrent::count)
        .ok_or_else(|| ObservableError::Unregistered(format!("moving bond anchored at {x}")))
}

/// Winding-corrected displacement of the tagged particle.
pub fn tagged_position(sim: &Simulator) -> Result<i64, ObservableError> {
    sim.config()
        .tagged_displacement()
        .ok_or(ObservableError::NoTagged)
}

/// `(1/sqrt N) sum_x H(arg)(eta(x) - alpha)` with `arg = x/N` (static) or
/// `(x - floor(v tau))/N` (comoving), `tau = t * speed`.
pub fn field_value(
    config: &Configuration,
    h: &TestFunction,
    t: f64,
    frame: Frame,
    params: &SimParams,
) -> Result<f64, ObservableError> {
    let n = params.n as f64;
    let shift = match frame {
        Frame::Static => 0,
        Frame::Comoving => (params.velocity() * params.physical_time(t)).floor() as i64,
    };
    let (lo, hi) = support_window(h, n, shift, config.len())?;
    let a = params.alpha;
    let sum: f64 = (lo..=hi)
        .map(|x| h.eval((x - shift) as f64 / n) * (config.eta(x) as f64 - a))
        .sum();
    Ok(sum / n.sqrt())
}

pub fn bg_integral(
    sim: &Simulator,
    h: &TestFunction,
    prefactor_exponent: f64,
) -> Result<f64, ObservableError> {
    sim.bg(h, prefactor_exponent)
        .map(BgAccumulator::value)
        .ok_or_else(|| {
            ObservableError::Unregistered(format!(
                "Boltzmann-Gibbs accumulator ({}, b = {prefactor_exponent})",
                h.label()
            ))
        })
}

/// `X/sqrt N - holes(eta_0, [0, floor((p - q) alpha tau)]) / (alpha sqrt N)`.
pub fn tagged_readout_gap(sim: &Simulator) -> Result<f64, ObservableError> {
    let params = sim.params();
    if params.p <= params.q() {
        return Err(ObservableError::NotAsymmetric { p: params.p });
    }
    if params.time_scale == TimeScale::Diffusive {
        return Err(ObservableError::WrongTimeScale(params.time_scale));
    }
    if params.alpha <= 0.0 {
        return Err(ObservableError::ZeroDensity);
    }
    let x = tagged_position(sim)?;
    let root_n = (params.n as f64).sqrt();
    let end = (params.drift() * params.alpha * sim.phys_time()).floor() as i64;
    let holes = sim.initial_config().hole_count(0, end)?;
    Ok(x as f64 / root_n - holes as f64 / (params.alpha * root_n))
}

/// `(J_{x-1,x} - (p - q) chi tau)/sqrt N - sum_{y = x - floor(v tau)}^{x-1} (eta_0(y) - alpha)/sqrt N`
/// on the hyperbolic scale; needs the bond `[x - 1, x]` registered.
pub fn current_readout_gap(sim: &Simulator, x: i64) -> Result<f64, ObservableError> {
    let params = sim.params();
    let v = params.velocity();
    if v <= 0.0 {
        return Err(ObservableError::NonPositiveVelocity { v });
    }
    if params.time_scale != TimeScale::Hyperbolic {
        return Err(ObservableError::WrongTimeScale(params.time_scale));
    }
    let j = bond_current(sim, x - 1)?;
    let tau = sim.phys_time();
    let root_n = (params.n as f64).sqrt();
    let mean = params.drift() * params.chi() * tau;
    let reach = (v * tau).floor() as i64;
    let initial = sim.initial_config();
    let a = params.alpha;
    let initial_sum: f64 = (x - reach..x).map(|y| initial.eta(y) as f64 - a).sum();
    Ok((j as f64 - mean) / root_n - initial_sum / root_n)
}

/// `sum_{x=0}^{n-1} eta(x)` with the usual convention
/// `sum_{x=0}^{n-1} = -sum_{x=n}^{-1}` for negative `n`.
fn signed_prefix_sum(config: &Configuration, n: i64) -> i64 {
    if n >= 0 {
        (0..n).map(|x| config.eta(x) as i64).sum()
    } else {
        -(n..0).map(|x| config.eta(x) as i64).sum::<i64>()
    }
}

/// Whether `{X_t >= n}` and `{J_{-1,0}(t) >= sum_{x=0}^{n-1} eta_t(x)}`
/// agree at the current time.
pub fn tagged_current_relation_check(sim: &Simulator, n: i64) -> Result<bool, ObservableError> {
    let x = tagged_position(sim)?;
    let j = bond_current(sim, -1)?;
    let lhs = x >= n;
    let rhs = j >= signed_prefix_sum(sim.config(), n);
    Ok(lhs == rhs)
}

/// `J_{x-1,x}(t) - J_{x,x+1}(t) == eta_t(x) - eta_0(x)`; needs both bonds.
pub fn conservation_check(sim: &Simulator, x: i64) -> Result<bool, ObservableError> {
    let inflow = bond_current(sim, x - 1)?;
    let outflow = bond_current(sim, x)?;
    let change = sim.config().eta(x) as i64 - sim.initial_config().eta(x) as i64;
    Ok(inflow - outflow == change)
}
