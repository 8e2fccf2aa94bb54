//! Replica orchestration.
//!
//! A [`ReplicaPlan`] names an experiment (parameters, initial law,
//! observables, checkpoint times), a replica count and a master seed.
//! [`run_replicas`] runs the replicas in parallel and returns every
//! per-replica value in replica order together with accumulators folded in
//! that same order, so results are bit-identical for any thread count.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{EngineError, Simulator};
use crate::lattice::{sample_initial, InitialLaw, SimParams};
use crate::observables::{
    bg_integral, bond_current, conservation_check, current_readout_gap, field_value,
    moving_bond_current, tagged_current_relation_check, tagged_position, tagged_readout_gap, Frame,
    ObservableError,
};
use crate::rng::derive_seed;
use crate::stats::Accumulator;
use crate::test_functions::TestFunction;

/// Range of `n` for the tagged-current relation check.
pub const RELATION_RANGE: std::ops::RangeInclusive<i64> = -20..=20;

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableSpec {
    /// `J_{x,x+1}`.
    BondCurrent { bond: i64 },
    /// `(J_{x-1,x} - (p - q) chi tau) / sqrt N`.
    CurrentFluctuation { site: i64 },
    MovingBondCurrent { anchor: i64 },
    /// `(J - (p - q) alpha^2 tau) / sqrt N` for the moving bond.
    MovingBondFluctuation { anchor: i64 },
    TaggedDisplacement,
    /// `(X - (p - q)(1 - alpha) tau) / sqrt N`.
    TaggedFluctuation,
    Field { h: TestFunction, frame: Frame },
    BgIntegral { h: TestFunction, b: f64 },
    TaggedReadoutGap,
    CurrentReadoutGap { site: i64 },
}

impl ObservableSpec {
    /// Stable name used as map key and in CSV output.
    pub fn id(&self) -> String {
        match self {
            ObservableSpec::BondCurrent { bond } => format!("bond_current[{bond}]"),
            ObservableSpec::CurrentFluctuation { site } => format!("current_fluct[{site}]"),
            ObservableSpec::MovingBondCurrent { anchor } => format!("moving_bond[{anchor}]"),
            ObservableSpec::MovingBondFluctuation { anchor } => {
                format!("moving_bond_fluct[{anchor}]")
            }
            ObservableSpec::TaggedDisplacement => "tagged_position".into(),
            ObservableSpec::TaggedFluctuation => "tagged_fluct".into(),
            ObservableSpec::Field { h, frame } => {
                let f = match frame {
                    Frame::Static => "static",
                    Frame::Comoving => "comoving",
                };
                format!("field[{};{f}]", h.label())
            }
            ObservableSpec::BgIntegral { h, b } => format!("bg_integral[{};b={b}]", h.label()),
            ObservableSpec::TaggedReadoutGap => "tagged_readout_gap".into(),
            ObservableSpec::CurrentReadoutGap { site } => format!("current_readout_gap[{site}]"),
        }
    }

    /// Whether the observable needs a tagged particle.
    pub fn needs_tagged(&self) -> bool {
        matches!(
            self,
            ObservableSpec::TaggedDisplacement
                | ObservableSpec::TaggedFluctuation
                | ObservableSpec::TaggedReadoutGap
        )
    }

    fn register(&self, sim: &mut Simulator) -> Result<(), EngineError> {
        match self {
            ObservableSpec::BondCurrent { bond } => sim.register_bond(*bond),
            ObservableSpec::CurrentFluctuation { site }
            | ObservableSpec::CurrentReadoutGap { site } => sim.register_bond(site - 1),
            ObservableSpec::MovingBondCurrent { anchor }
            | ObservableSpec::MovingBondFluctuation { anchor } => sim.register_moving_bond(*anchor),
            ObservableSpec::BgIntegral { h, b } => sim.register_bg(h.clone(), *b),
            _ => Ok(()),
        }
    }

    fn read(&self, sim: &Simulator, t: f64) -> Result<f64, ObservableError> {
        let params = sim.params();
        let root_n = (params.n as f64).sqrt();
        let tau = sim.phys_time();
        Ok(match self {
            ObservableSpec::BondCurrent { bond } => bond_current(sim, *bond)? as f64,
            ObservableSpec::CurrentFluctuation { site } => {
                let j = bond_current(sim, site - 1)? as f64;
                (j - params.drift() * params.chi() * tau) / root_n
            }
            ObservableSpec::MovingBondCurrent { anchor } => {
                moving_bond_current(sim, *anchor)? as f64
            }
            ObservableSpec::MovingBondFluctuation { anchor } => {
                let j = moving_bond_current(sim, *anchor)? as f64;
                (j - params.drift() * params.alpha * params.alpha * tau) / root_n
            }
            ObservableSpec::TaggedDisplacement => tagged_position(sim)? as f64,
            ObservableSpec::TaggedFluctuation => {
                let x = tagged_position(sim)? as f64;
                (x - params.drift() * (1.0 - params.alpha) * tau) / root_n
            }
            ObservableSpec::Field { h, frame } => field_value(sim.config(), h, t, *frame, params)?,
            ObservableSpec::BgIntegral { h, b } => bg_integral(sim, h, *b)?,
            ObservableSpec::TaggedReadoutGap => tagged_readout_gap(sim)?,
            ObservableSpec::CurrentReadoutGap { site } => current_readout_gap(sim, *site)?,
        })
    }
}

/// Smallest multiple of 64 that satisfies the ring margin and holds the
/// numerical support of every field and Boltzmann–Gibbs test function.
pub fn derive_ring_size(params: &SimParams, observables: &[ObservableSpec]) -> usize {
    let n = params.n as f64;
    let mut need = params.min_ring_size();
    for o in observables {
        let h = match o {
            ObservableSpec::Field { h, .. } | ObservableSpec::BgIntegral { h, .. } => h,
            _ => continue,
        };
        if let Some((a, b)) = h.support() {
            // window sites plus the right neighbour read by the quadratic term
            need = need.max(((b - a) * n).ceil() as usize + 2);
        }
    }
    need.div_ceil(64) * 64
}

/// What one replica does.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub params: SimParams,
    pub law: InitialLaw,
    pub observables: Vec<ObservableSpec>,
    /// Macroscopic times, nondecreasing, within `[0, t_max]`.
    pub checkpoints: Vec<f64>,
    /// Run the conservation and tagged-current checks at every checkpoint.
    pub pathwise_checks: bool,
}

impl Experiment {
    /// Expected jump attempts per replica: `alpha L tau_max`.
    pub fn expected_attempts(&self) -> f64 {
        self.params.alpha * self.params.l as f64 * self.params.physical_horizon()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaPlan {
    pub experiment: Experiment,
    pub replicas: u64,
    pub master_seed: u64,
}

impl ReplicaPlan {
    /// `(initial-law seed, dynamics seed)` of replica `r`.
    pub fn replica_seeds(&self, r: u64) -> (u64, u64) {
        let s = derive_seed(self.master_seed, r);
        (derive_seed(s, 0), derive_seed(s, 1))
    }

    pub fn expected_attempts(&self) -> f64 {
        self.experiment.expected_attempts() * self.replicas as f64
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("replica {replica}: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: EngineError,
    },
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
    #[error("event trace: {0}")]
    Trace(#[from] std::io::Error),
}

/// Counts of pathwise identity checks and their failures.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PathwiseReport {
    pub conservation_checks: u64,
    pub conservation_violations: u64,
    pub relation_checks: u64,
    pub relation_violations: u64,
}

impl PathwiseReport {
    pub fn violations(&self) -> u64 {
        self.conservation_violations + self.relation_violations
    }

    fn merge(&mut self, o: &PathwiseReport) {
        self.conservation_checks += o.conservation_checks;
        self.conservation_violations += o.conservation_violations;
        self.relation_checks += o.relation_checks;
        self.relation_violations += o.relation_violations;
    }
}

/// Key of a sample series: observable id and checkpoint index.
pub type SeriesKey = (String, usize);

#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub checkpoints: Vec<f64>,
    pub observables: Vec<String>,
    /// Per-replica values, in replica order.
    pub samples: BTreeMap<SeriesKey, Vec<f64>>,
    pub accumulators: BTreeMap<SeriesKey, Accumulator>,
    pub pathwise: PathwiseReport,
    pub attempts: u64,
    pub replicas: u64,
}

impl RunResult {
    pub fn series(&self, id: &str, checkpoint: usize) -> &[f64] {
        self.samples
            .get(&(id.to_string(), checkpoint))
            .map(Vec::as_slice)
            .unwrap_or_else(|| panic!("no series {id} at checkpoint {checkpoint}"))
    }

    pub fn accumulator(&self, id: &str, checkpoint: usize) -> &Accumulator {
        self.accumulators
            .get(&(id.to_string(), checkpoint))
            .unwrap_or_else(|| panic!("no series {id} at checkpoint {checkpoint}"))
    }

    /// Elementwise combination of two series.
    pub fn combine(
        &self,
        a: (&str, usize),
        b: (&str, usize),
        f: impl Fn(f64, f64) -> f64,
    ) -> Vec<f64> {
        self.series(a.0, a.1)
            .iter()
            .zip(self.series(b.0, b.1))
            .map(|(x, y)| f(*x, *y))
            .collect()
    }
}

struct ReplicaOutput {
    /// `values[obs][checkpoint]`.
    values: Vec<Vec<f64>>,
    pathwise: PathwiseReport,
    attempts: u64,
}

fn validate_plan(plan: &ReplicaPlan) -> Result<(), HarnessError> {
    let e = &plan.experiment;
    let v = e.params.validate();
    if !v.is_ok() {
        let msg = v
            .violations
            .iter()
            .map(|x| format!("{}: {}", x.field, x.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(HarnessError::Plan(msg));
    }
    if plan.replicas == 0 {
        return Err(HarnessError::Plan("replica count must be positive".into()));
    }
    if e.checkpoints.is_empty() {
        return Err(HarnessError::Plan("no checkpoints".into()));
    }
    if e.checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(HarnessError::Plan("checkpoints must be nondecreasing".into()));
    }
    if e.checkpoints.iter().any(|&t| !(0.0..=e.params.t_max).contains(&t)) {
        return Err(HarnessError::Plan(format!(
            "checkpoints must lie in [0, {}]",
            e.params.t_max
        )));
    }
    if e.law == InitialLaw::Bernoulli && e.observables.iter().any(ObservableSpec::needs_tagged) {
        return Err(HarnessError::Plan(
            "tagged observables need the bernoulli_star initial law".into(),
        ));
    }
    let mut ids: Vec<String> = e.observables.iter().map(ObservableSpec::id).collect();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(HarnessError::Plan("duplicate observable".into()));
    }
    Ok(())
}

fn run_one(plan: &ReplicaPlan, r: u64) -> Result<ReplicaOutput, EngineError> {
    let (out, _) = run_traced(plan, r, None)?;
    Ok(out)
}

fn run_traced(
    plan: &ReplicaPlan,
    r: u64,
    trace: Option<Box<dyn Write + Send>>,
) -> Result<(ReplicaOutput, Simulator), EngineError> {
    let e = &plan.experiment;
    let (init_seed, dyn_seed) = plan.replica_seeds(r);
    let config = sample_initial(e.law, &e.params, init_seed);
    let mut sim = Simulator::new(e.params.clone(), config, dyn_seed)?;
    if let Some(out) = trace {
        sim.enable_trace(out)?;
    }
    for o in &e.observables {
        o.register(&mut sim)?;
    }
    let tagged = e.law == InitialLaw::BernoulliStar;
    if e.pathwise_checks {
        sim.register_bond(-1)?;
        sim.register_bond(0)?;
    }
    let mut values = vec![Vec::with_capacity(e.checkpoints.len()); e.observables.len()];
    let mut pathwise = PathwiseReport::default();
    for &t in &e.checkpoints {
        sim.advance_to_scaled(t)?;
        for (slot, o) in values.iter_mut().zip(&e.observables) {
            slot.push(o.read(&sim, t)?);
        }
        if e.pathwise_checks {
            pathwise.conservation_checks += 1;
            if !conservation_check(&sim, 0)? {
                pathwise.conservation_violations += 1;
            }
            if tagged {
                for n in RELATION_RANGE {
                    pathwise.relation_checks += 1;
                    if !tagged_current_relation_check(&sim, n)? {
                        pathwise.relation_violations += 1;
                    }
                }
            }
        }
    }
    let out = ReplicaOutput {
        values,
        pathwise,
        attempts: sim.attempts(),
    };
    Ok((out, sim))
}

/// Reruns replica `r` alone, writing its binary event trace to `out`.
///
/// The trace is a debugging aid; its record layout is not a stable format.
pub fn trace_replica(
    plan: &ReplicaPlan,
    r: u64,
    out: Box<dyn Write + Send>,
) -> Result<u64, HarnessError> {
    validate_plan(plan)?;
    let (_, mut sim) = run_traced(plan, r, Some(out))
        .map_err(|source| HarnessError::Replica { replica: r, source })?;
    sim.finish_trace()?;
    Ok(sim.executed_jumps())
}

/// Runs every replica of `plan` on the current rayon pool.
pub fn run_replicas(plan: &ReplicaPlan) -> Result<RunResult, HarnessError> {
    validate_plan(plan)?;
    let outputs: Vec<ReplicaOutput> = (0..plan.replicas)
        .into_par_iter()
        .map(|r| run_one(plan, r).map_err(|source| HarnessError::Replica { replica: r, source }))
        .collect::<Result<_, _>>()?;

    let e = &plan.experiment;
    let ids: Vec<String> = e.observables.iter().map(ObservableSpec::id).collect();
    let mut samples: BTreeMap<SeriesKey, Vec<f64>> = BTreeMap::new();
    let mut pathwise = PathwiseReport::default();
    let mut attempts = 0;
    for out in &outputs {
        for (id, per_cp) in ids.iter().zip(&out.values) {
            for (k, &v) in per_cp.iter().enumerate() {
                samples.entry((id.clone(), k)).or_default().push(v);
            }
        }
        pathwise.merge(&out.pathwise);
        attempts += out.attempts;
    }
    let accumulators = samples
        .iter()
        .map(|(k, v)| (k.clone(), Accumulator::from_slice(v)))
        .collect();
    Ok(RunResult {
        name: e.name.clone(),
        checkpoints: e.checkpoints.clone(),
        observables: ids,
        samples,
        accumulators,
        pathwise,
        attempts,
        replicas: plan.replicas,
    })
}

/// [`run_replicas`] on a dedicated pool of `threads` workers.
pub fn run_replicas_with_threads(
    plan: &ReplicaPlan,
    threads: usize,
) -> Result<RunResult, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    pool.install(|| run_replicas(plan))
}
