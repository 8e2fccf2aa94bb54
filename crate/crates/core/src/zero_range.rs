//! Exclusion ↔ zero-range (queue) bijection and a direct zero-range
//! simulator.
//!
//! Particles are labelled clockwise from the tagged one (label 0). Queue `i`
//! holds the holes between particle `i` and particle `i + 1`. A right jump of
//! particle `i` moves a customer from queue `i` to queue `i - 1` (rate `p`),
//! a left jump of particle `i + 1` moves one from queue `i` to queue `i + 1`
//! (rate `q`). The tagged particle jumping right is therefore a customer
//! leaving queue 0 for queue `-1`, counted in `N^-`; its left jumps are
//! customers entering queue 0 from queue `-1`, counted in `N^+`.

use rand_distr::{Distribution, Geometric};
use thiserror::Error;

use crate::lattice::Configuration;
use crate::rng::{exp_waiting, rng_from_seed, uniform_index, unit_f64, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZeroRangeError {
    #[error("configuration has no particles")]
    NoParticles,
    #[error("configuration has no tagged particle")]
    NoTagged,
    #[error("queues hold {customers} customers for {queues} particles, expected ring of {len}")]
    SumMismatch { customers: u64, queues: usize, len: usize },
    #[error("need at least one queue")]
    Empty,
    #[error("p must lie in [0, 1], got {0}")]
    BadRate(f64),
    #[error("alpha must lie in (0, 1], got {0}")]
    BadDensity(f64),
    #[error("cannot advance to t = {requested}: simulator is already at t = {current}")]
    TimeInPast { requested: f64, current: f64 },
}

/// Queue lengths indexed by particle label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueueConfig {
    pub queues: Vec<u32>,
}

impl QueueConfig {
    pub fn len(&self) -> usize {
        self.queues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    pub fn customers(&self) -> u64 {
        self.queues.iter().map(|&q| q as u64).sum()
    }

    /// Ring size this queue configuration lives on.
    pub fn ring_len(&self) -> usize {
        self.customers() as usize + self.queues.len()
    }
}

/// Gap sequence read clockwise from the tagged particle.
pub fn exclusion_to_zr(config: &Configuration) -> Result<QueueConfig, ZeroRangeError> {
    let tagged = config.tagged().ok_or(ZeroRangeError::NoTagged)?;
    let len = config.len();
    if config.particle_count() == 0 {
        return Err(ZeroRangeError::NoParticles);
    }
    let mut queues = Vec::with_capacity(config.particle_count());
    let mut gap = 0u32;
    for k in 1..=len {
        let s = (tagged + k) % len;
        if config.get(s) {
            queues.push(gap);
            gap = 0;
        } else {
            gap += 1;
        }
    }
    Ok(QueueConfig { queues })
}

/// Inverse of [`exclusion_to_zr`], placing the tagged particle at `origin`.
pub fn zr_to_exclusion(
    queues: &QueueConfig,
    origin: usize,
    len: usize,
) -> Result<Configuration, ZeroRangeError> {
    if queues.is_empty() {
        return Err(ZeroRangeError::NoParticles);
    }
    if queues.ring_len() != len {
        return Err(ZeroRangeError::SumMismatch {
            customers: queues.customers(),
            queues: queues.len(),
            len,
        });
    }
    let mut config = Configuration::empty(len);
    let origin = origin % len;
    let mut site = origin;
    for &q in &queues.queues {
        config.set(site, true);
        site = (site + q as usize + 1) % len;
    }
    config.set_tagged(origin);
    Ok(config)
}

/// `k` i.i.d. Geometric(alpha) queues, `P(n) = alpha (1 - alpha)^n`.
pub fn sample_geometric_queues(
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<QueueConfig, ZeroRangeError> {
    if k == 0 {
        return Err(ZeroRangeError::Empty);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ZeroRangeError::BadDensity(alpha));
    }
    let mut rng = rng_from_seed(seed);
    let geo = Geometric::new(alpha).map_err(|_| ZeroRangeError::BadDensity(alpha))?;
    let queues = (0..k).map(|_| geo.sample(&mut rng) as u32).collect();
    Ok(QueueConfig { queues })
}

/// Zero-range dynamics: each nonempty queue emits a customer at rate 1,
/// to the left (index - 1) with probability `p`, to the right otherwise.
#[derive(Debug, Clone)]
pub struct ZrSimulator {
    queues: Vec<u32>,
    /// Indices of nonempty queues, with back-pointers in `slot`.
    active: Vec<u32>,
    slot: Vec<u32>,
    p: f64,
    time: f64,
    next_event: f64,
    rng: SimRng,
    /// Customers moved from queue -1 to queue 0.
    n_plus: u64,
    /// Customers moved from queue 0 to queue -1.
    n_minus: u64,
    events: u64,
}

const NONE: u32 = u32::MAX;

impl ZrSimulator {
    pub fn new(queues: QueueConfig, p: f64, seed: u64) -> Result<Self, ZeroRangeError> {
        if queues.is_empty() {
            return Err(ZeroRangeError::Empty);
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(ZeroRangeError::BadRate(p));
        }
        let queues = queues.queues;
        let mut active = Vec::new();
        let mut slot = vec![NONE; queues.len()];
        for (i, &q) in queues.iter().enumerate() {
            if q > 0 {
                slot[i] = active.len() as u32;
                active.push(i as u32);
            }
        }
        let mut sim = ZrSimulator {
            queues,
            active,
            slot,
            p,
            time: 0.0,
            next_event: f64::INFINITY,
            rng: rng_from_seed(seed),
            n_plus: 0,
            n_minus: 0,
            events: 0,
        };
        sim.schedule(0.0);
        Ok(sim)
    }

    fn schedule(&mut self, from: f64) {
        self.next_event = if self.active.is_empty() {
            f64::INFINITY
        } else {
            from + exp_waiting(&mut self.rng, self.active.len() as f64)
        };
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn queues(&self) -> &[u32] {
        &self.queues
    }

    pub fn queue_config(&self) -> QueueConfig {
        QueueConfig {
            queues: self.queues.clone(),
        }
    }

    pub fn n_plus(&self) -> u64 {
        self.n_plus
    }

    pub fn n_minus(&self) -> u64 {
        self.n_minus
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    fn activate(&mut self, i: usize) {
        if self.slot[i] == NONE {
            self.slot[i] = self.active.len() as u32;
            self.active.push(i as u32);
        }
    }

    fn deactivate(&mut self, i: usize) {
        let s = self.slot[i] as usize;
        let last = self.active.pop().expect("active set nonempty");
        if last as usize != i {
            self.active[s] = last;
            self.slot[last as usize] = s as u32;
        }
        self.slot[i] = NONE;
    }

    /// Advance to physical time `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<(), ZeroRangeError> {
        if t < self.time {
            return Err(ZeroRangeError::TimeInPast {
                requested: t,
                current: self.time,
            });
        }
        let k = self.queues.len();
        while self.next_event <= t {
            let now = self.next_event;
            let pick = uniform_index(&mut self.rng, self.active.len() as u64) as usize;
            let from = self.active[pick] as usize;
            let left = unit_f64(&mut self.rng) < self.p;
            let to = if left {
                if from == 0 {
                    k - 1
                } else {
                    from - 1
                }
            } else if from + 1 == k {
                0
            } else {
                from + 1
            };
            if left && from == 0 {
                self.n_minus += 1;
            } else if !left && from + 1 == k {
                self.n_plus += 1;
            }
            self.queues[from] -= 1;
            if self.queues[from] == 0 {
                self.deactivate(from);
            }
            self.queues[to] += 1;
            self.activate(to);
            self.events += 1;
            self.schedule(now);
        }
        self.time = t;
        Ok(())
    }
}

/// `-N^+ + N^-`: the exclusion tagged displacement read off the queue
/// boundary flow.
pub fn zr_tagged_displacement(sim: &ZrSimulator) -> i64 {
    sim.n_minus as i64 - sim.n_plus as i64
}
