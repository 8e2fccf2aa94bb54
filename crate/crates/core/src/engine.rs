//! Thinned kinetic Monte Carlo for the exclusion process on a ring.
//!
//! Every particle carries an exponential clock of rate `p + q = 1`, so the
//! superposed clock has rate equal to the particle count `n`, which the
//! dynamics conserves. Each event draws, in this order:
//!
//! 1. the particle, uniformly from the dense position list ([`uniform_index`]);
//! 2. the direction, right iff a [`unit_f64`] draw is below `p`;
//! 3. the waiting time to the next event, `-ln(1 - u) / n` ([`exp_waiting`]).
//!
//! The jump is executed iff the target site is empty, so executed jumps
//! `x -> x ± 1` occur at exactly the generator rates `p eta(x)(1 - eta(x+1))`
//! and `q eta(x)(1 - eta(x-1))`. Suppressed attempts are still delivered to
//! observers.
//!
//! The pending event time survives checkpoints, so the event stream does not
//! depend on how a run is split into `advance_to_scaled` calls.

use std::io::{self, BufWriter, Write};

use thiserror::Error;

use crate::lattice::{Configuration, SimParams, Violation};
use crate::observables::{BgAccumulator, BondCurrent, MovingBondCurrent, ObservableError};
use crate::rng::{exp_waiting, rng_from_seed, uniform_index, unit_f64, SimRng};
use crate::test_functions::TestFunction;

/// Events between full particle-index rescans in debug builds.
#[cfg(debug_assertions)]
const RESCAN_INTERVAL: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    /// Physical time of the attempt.
    pub time: f64,
    /// Ring site of the jumping particle.
    pub site: usize,
    pub direction: Direction,
    /// False when the target site was occupied.
    pub executed: bool,
    /// Physical time since the previous attempt (or since time 0).
    pub dt: f64,
}

impl EventRecord {
    #[inline]
    pub fn target(&self, len: usize) -> usize {
        match self.direction {
            Direction::Right => {
                if self.site + 1 == len {
                    0
                } else {
                    self.site + 1
                }
            }
            Direction::Left => {
                if self.site == 0 {
                    len - 1
                } else {
                    self.site - 1
                }
            }
        }
    }
}

/// Receives every attempt before it is applied.
///
/// `config` is the configuration just before the event; when
/// `event.executed` the particle at `event.site` then moves to
/// `event.target(config.len())`.
pub trait EventSink: Send {
    fn on_event(&mut self, event: &EventRecord, config: &Configuration);

    /// Called at the end of every `advance_to_scaled` with the physical time
    /// reached.
    fn on_checkpoint(&mut self, _time: f64, _config: &Configuration) {}
}

/// Binary event dump: per attempt an 8-byte little-endian `f64` time, a
/// 4-byte little-endian `u32` site and one flag byte (bit 0: right jump,
/// bit 1: executed). Debugging aid only; the layout is not stable.
pub struct EventTrace {
    out: BufWriter<Box<dyn Write + Send>>,
    error: Option<io::Error>,
}

impl EventTrace {
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        EventTrace {
            out: BufWriter::new(out),
            error: None,
        }
    }

    pub fn encode(event: &EventRecord) -> [u8; 13] {
        let mut buf = [0u8; 13];
        buf[..8].copy_from_slice(&event.time.to_le_bytes());
        buf[8..12].copy_from_slice(&(event.site as u32).to_le_bytes());
        buf[12] = (event.direction == Direction::Right) as u8 | (event.executed as u8) << 1;
        buf
    }

    pub fn finish(mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()
    }
}

impl EventSink for EventTrace {
    fn on_event(&mut self, event: &EventRecord, _config: &Configuration) {
        if self.error.is_none() {
            if let Err(e) = self.out.write_all(&Self::encode(event)) {
                self.error = Some(e);
            }
        }
    }

    fn on_checkpoint(&mut self, _time: f64, _config: &Configuration) {
        if self.error.is_none() {
            if let Err(e) = self.out.flush() {
                self.error = Some(e);
            }
        }
    }
}

/// Registered observable accumulators, notified in registration order.
pub enum Observer {
    Bond(BondCurrent),
    MovingBond(MovingBondCurrent),
    BoltzmannGibbs(BgAccumulator),
    Trace(EventTrace),
    Custom(Box<dyn EventSink>),
}

impl Observer {
    #[inline]
    fn on_event(&mut self, event: &EventRecord, config: &Configuration) {
        match self {
            Observer::Bond(b) => b.on_event(event),
            Observer::MovingBond(m) => m.on_event(event, config),
            Observer::BoltzmannGibbs(bg) => bg.on_event(event, config),
            Observer::Trace(t) => t.on_event(event, config),
            Observer::Custom(s) => s.on_event(event, config),
        }
    }

    fn on_checkpoint(&mut self, time: f64, config: &Configuration) {
        match self {
            Observer::Bond(_) => {}
            Observer::MovingBond(m) => m.on_checkpoint(time, config),
            Observer::BoltzmannGibbs(bg) => bg.on_checkpoint(time, config),
            Observer::Trace(t) => t.on_checkpoint(time, config),
            Observer::Custom(s) => s.on_checkpoint(time, config),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),
    #[error("configuration has {found} sites, parameters say {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("cannot advance to t = {requested}: simulator is already at t = {current}")]
    TimeInPast { requested: f64, current: f64 },
    #[error("physical time {requested} exceeds the validated horizon {horizon}")]
    BeyondHorizon { requested: f64, horizon: f64 },
    #[error("observers must be registered before the first advance")]
    RegisteredLate,
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

pub struct Simulator {
    params: SimParams,
    config: Configuration,
    initial: Configuration,
    /// Dense list of particle sites; the label of a particle is its index.
    positions: Vec<u32>,
    tagged_label: Option<usize>,
    phys_time: f64,
    last_event: f64,
    next_event: f64,
    rng: SimRng,
    observers: Vec<Observer>,
    attempts: u64,
    executed: u64,
}

/// Builds a simulator at physical time 0.
pub fn make_sim(params: SimParams, config: Configuration, seed: u64) -> Result<Simulator, EngineError> {
    Simulator::new(params, config, seed)
}

impl Simulator {
    pub fn new(params: SimParams, config: Configuration, seed: u64) -> Result<Self, EngineError> {
        let validation = params.validate();
        if !validation.is_ok() {
            return Err(EngineError::InvalidParams(validation.violations));
        }
        Self::build(params, config, seed)
    }

    /// Simulator for the process on the ring itself rather than as a window
    /// onto the line: the ring-size margin is not enforced. Every other
    /// parameter check still applies.
    pub fn on_closed_ring(params: SimParams, config: Configuration, seed: u64) -> Result<Self, EngineError> {
        let violations: Vec<Violation> = params
            .validate()
            .violations
            .into_iter()
            .filter(|v| v.field != "l" || params.l == 0)
            .collect();
        if !violations.is_empty() {
            return Err(EngineError::InvalidParams(violations));
        }
        Self::build(params, config, seed)
    }

    fn build(params: SimParams, config: Configuration, seed: u64) -> Result<Self, EngineError> {
        if config.len() != params.l {
            return Err(EngineError::LengthMismatch {
                expected: params.l,
                found: config.len(),
            });
        }
        let positions: Vec<u32> = config.particle_sites().map(|s| s as u32).collect();
        let tagged_label = config
            .tagged()
            .map(|t| positions.iter().position(|&s| s as usize == t).expect("tagged site occupied"));
        let mut rng = rng_from_seed(seed);
        let next_event = if positions.is_empty() {
            f64::INFINITY
        } else {
            exp_waiting(&mut rng, positions.len() as f64)
        };
        Ok(Simulator {
            params,
            initial: config.clone(),
            config,
            positions,
            tagged_label,
            phys_time: 0.0,
            last_event: 0.0,
            next_event,
            rng,
            observers: Vec::new(),
            attempts: 0,
            executed: 0,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    /// Snapshot of the configuration at time 0.
    pub fn initial_config(&self) -> &Configuration {
        &self.initial
    }

    pub fn phys_time(&self) -> f64 {
        self.phys_time
    }

    /// Current macroscopic time.
    pub fn time(&self) -> f64 {
        self.phys_time / self.params.speed()
    }

    /// Total attempt rate, the particle count.
    pub fn total_rate(&self) -> f64 {
        self.positions.len() as f64
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn executed_jumps(&self) -> u64 {
        self.executed
    }

    pub fn observers(&self) -> &[Observer] {
        &self.observers
    }

    fn ensure_fresh(&self) -> Result<(), EngineError> {
        if self.phys_time > 0.0 || self.attempts > 0 {
            Err(EngineError::RegisteredLate)
        } else {
            Ok(())
        }
    }

    /// Tracks the current through the bond `[x, x + 1]`.
    pub fn register_bond(&mut self, x: i64) -> Result<(), EngineError> {
        self.ensure_fresh()?;
        if self.bond(x).is_none() {
            self.observers
                .push(Observer::Bond(BondCurrent::new(x, self.params.l)));
        }
        Ok(())
    }

    /// Tracks the current through the bond `[x + floor(v tau), x + floor(v tau) + 1]`.
    pub fn register_moving_bond(&mut self, x: i64) -> Result<(), EngineError> {
        self.ensure_fresh()?;
        if self.moving_bond(x).is_none() {
            self.observers.push(Observer::MovingBond(MovingBondCurrent::new(
                x,
                self.params.velocity(),
            )));
        }
        Ok(())
    }

    /// Tracks `int_0^t sum_x H(x/N) (eta(x) - alpha)(eta(x+1) - alpha) ds`.
    pub fn register_bg(&mut self, h: TestFunction, prefactor_exponent: f64) -> Result<(), EngineError> {
        self.ensure_fresh()?;
        if self.bg(&h, prefactor_exponent).is_none() {
            let acc = BgAccumulator::new(h, prefactor_exponent, &self.params, &self.config)?;
            self.observers.push(Observer::BoltzmannGibbs(acc));
        }
        Ok(())
    }

    pub fn register_sink(&mut self, sink: Box<dyn EventSink>) -> Result<(), EngineError> {
        self.ensure_fresh()?;
        self.observers.push(Observer::Custom(sink));
        Ok(())
    }

    pub fn enable_trace(&mut self, out: Box<dyn Write + Send>) -> Result<(), EngineError> {
        self.ensure_fresh()?;
        self.observers.push(Observer::Trace(EventTrace::new(out)));
        Ok(())
    }

    /// Flushes and removes any event trace, reporting the first write error.
    pub fn finish_trace(&mut self) -> io::Result<()> {
        let mut result = Ok(());
        let mut kept = Vec::with_capacity(self.observers.len());
        for obs in self.observers.drain(..) {
            match obs {
                Observer::Trace(t) => {
                    if let Err(e) = t.finish() {
                        result = result.and(Err(e));
                    }
                }
                other => kept.push(other),
            }
        }
        self.observers = kept;
        result
    }

    pub fn bond(&self, x: i64) -> Option<&BondCurrent> {
        self.observers.iter().find_map(|o| match o {
            Observer::Bond(b) if b.bond() == x => Some(b),
            _ => None,
        })
    }

    pub fn moving_bond(&self, x: i64) -> Option<&MovingBondCurrent> {
        self.observers.iter().find_map(|o| match o {
            Observer::MovingBond(m) if m.anchor() == x => Some(m),
            _ => None,
        })
    }

    pub fn bg(&self, h: &TestFunction, prefactor_exponent: f64) -> Option<&BgAccumulator> {
        self.observers.iter().find_map(|o| match o {
            Observer::BoltzmannGibbs(bg)
                if bg.test_function() == h && bg.prefactor_exponent() == prefactor_exponent =>
            {
                Some(bg)
            }
            _ => None,
        })
    }

    /// Runs the dynamics up to macroscopic time `t`.
    pub fn advance_to_scaled(&mut self, t: f64) -> Result<(), EngineError> {
        let target = self.params.physical_time(t);
        if target < self.phys_time {
            return Err(EngineError::TimeInPast {
                requested: t,
                current: self.time(),
            });
        }
        let horizon = self.params.physical_horizon();
        if target > horizon * (1.0 + 1e-12) {
            return Err(EngineError::BeyondHorizon {
                requested: target,
                horizon,
            });
        }
        self.run_until(target);
        Ok(())
    }

    fn run_until(&mut self, target: f64) {
        let len = self.config.len();
        let n = self.positions.len() as u64;
        let rate = n as f64;
        let p = self.params.p;
        while self.next_event <= target {
            let time = self.next_event;
            let label = uniform_index(&mut self.rng, n) as usize;
            let site = self.positions[label] as usize;
            let direction = if unit_f64(&mut self.rng) < p {
                Direction::Right
            } else {
                Direction::Left
            };
            let event = EventRecord {
                time,
                site,
                direction,
                executed: false,
                dt: time - self.last_event,
            };
            let to = event.target(len);
            let event = EventRecord {
                executed: !self.config.get(to),
                ..event
            };
            for obs in self.observers.iter_mut() {
                obs.on_event(&event, &self.config);
            }
            if event.executed {
                self.config.move_particle(site, to);
                self.positions[label] = to as u32;
                if self.tagged_label == Some(label) {
                    let wrapped = match direction {
                        Direction::Right if to == 0 => 1,
                        Direction::Left if site == 0 => -1,
                        _ => 0,
                    };
                    self.config.record_tagged_move(to, wrapped);
                }
                self.executed += 1;
            }
            self.attempts += 1;
            self.last_event = time;
            self.next_event = time + exp_waiting(&mut self.rng, rate);
            #[cfg(debug_assertions)]
            if self.attempts % RESCAN_INTERVAL == 0 {
                self.check_index();
            }
        }
        self.phys_time = target;
        for obs in self.observers.iter_mut() {
            obs.on_checkpoint(target, &self.config);
        }
    }

    /// Full consistency check of the particle index against the occupancy.
    pub fn check_index(&self) {
        assert_eq!(self.positions.len(), self.config.particle_count());
        for &s in &self.positions {
            assert!(self.config.get(s as usize), "indexed site {s} is empty");
        }
        if let Some(label) = self.tagged_label {
            assert_eq!(Some(self.positions[label] as usize), self.config.tagged());
        }
    }
}
