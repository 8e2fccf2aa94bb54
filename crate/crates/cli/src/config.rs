//! Experiment config files.
//!
//! A config is TOML. The grammar is documented in the README; this module
//! turns the raw document into a [`Plan`] and reports problems by key path
//! (`params.p`, `observables[2].bond`, ...).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use asep_core::harness::{derive_ring_size, Experiment, ObservableSpec, ReplicaPlan};
use asep_core::lattice::{InitialLaw, SimParams, TimeScale};
use asep_core::observables::Frame;
use asep_core::test_functions::{Tabulated, TestFunction};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending key, empty when the file itself is bad.
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    replicas: u64,
    master_seed: u64,
    initial_law: String,
    #[serde(default)]
    checkpoints: Vec<f64>,
    params: RawParams,
    #[serde(default)]
    observables: Vec<RawObservable>,
    #[serde(default)]
    expected: Vec<RawExpected>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    p: f64,
    alpha: f64,
    n: u64,
    #[serde(default)]
    gamma: f64,
    time_scale: String,
    t_max: f64,
    l: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservable {
    kind: String,
    bond: Option<i64>,
    site: Option<i64>,
    anchor: Option<i64>,
    function: Option<RawFunction>,
    frame: Option<String>,
    b: Option<f64>,
    checkpoints: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunction {
    kind: String,
    order: Option<u32>,
    n: Option<f64>,
    center: Option<f64>,
    width: Option<f64>,
    path: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpected {
    name: Option<String>,
    observable: String,
    checkpoint: f64,
    statistic: String,
    value: f64,
    #[serde(default)]
    tolerance: f64,
    #[serde(default = "default_comparison")]
    comparison: String,
}

fn default_comparison() -> String {
    "relative".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Variance,
    SecondMoment,
    Skewness,
    ExcessKurtosis,
    KsPvalue,
}

impl Statistic {
    pub const ALL: [Statistic; 6] = [
        Statistic::Mean,
        Statistic::Variance,
        Statistic::SecondMoment,
        Statistic::Skewness,
        Statistic::ExcessKurtosis,
        Statistic::KsPvalue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Variance => "variance",
            Statistic::SecondMoment => "second_moment",
            Statistic::Skewness => "skewness",
            Statistic::ExcessKurtosis => "excess_kurtosis",
            Statistic::KsPvalue => "ks_pvalue",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// `|measured - value| <= tolerance |value|`.
    Relative,
    /// `|measured - value| <= tolerance`.
    Absolute,
    /// The confidence interval of the statistic covers `value`.
    CiCovers,
    LessThan,
    GreaterThan,
}

impl Comparison {
    pub fn name(self) -> &'static str {
        match self {
            Comparison::Relative => "relative",
            Comparison::Absolute => "absolute",
            Comparison::CiCovers => "ci_covers",
            Comparison::LessThan => "less_than",
            Comparison::GreaterThan => "greater_than",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Comparison::Relative,
            Comparison::Absolute,
            Comparison::CiCovers,
            Comparison::LessThan,
            Comparison::GreaterThan,
        ]
        .into_iter()
        .find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub name: String,
    pub observable: String,
    pub checkpoint: f64,
    pub statistic: Statistic,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
}

/// A parsed config: the harness plan, which checkpoints each observable
/// reports, and the acceptance entries.
#[derive(Debug, Clone)]
pub struct Plan {
    pub replica_plan: ReplicaPlan,
    /// Observable id to indices into the plan's checkpoint list.
    pub reported: BTreeMap<String, Vec<usize>>,
    pub expected: Vec<Expectation>,
}

/// CLI overrides applied before validation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
}

pub fn load(path: &Path, overrides: Overrides) -> Result<Plan, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    parse(&text, path.parent().unwrap_or(Path::new(".")), overrides)
}

/// Parses config text; relative table paths resolve against `base`.
pub fn parse(text: &str, base: &Path, overrides: Overrides) -> Result<Plan, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        // serde names the missing or unknown field in backticks
        let key = msg.split('`').nth(1).unwrap_or("").to_string();
        ConfigError::new(key, msg)
    })?;
    build(raw, base, overrides)
}

fn time_scale(s: &str) -> Option<TimeScale> {
    match s {
        "hyperbolic" => Some(TimeScale::Hyperbolic),
        "longer" => Some(TimeScale::Longer),
        "diffusive" => Some(TimeScale::Diffusive),
        _ => None,
    }
}

fn frame(s: &str) -> Option<Frame> {
    match s {
        "static" => Some(Frame::Static),
        "comoving" => Some(Frame::Comoving),
        _ => None,
    }
}

fn require<T>(v: Option<T>, key: String) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::new(key, "required for this kind"))
}

fn test_function(raw: &RawFunction, key: &str, base: &Path) -> Result<TestFunction, ConfigError> {
    let k = |field: &str| format!("{key}.{field}");
    Ok(match raw.kind.as_str() {
        "hermite" => TestFunction::Hermite(require(raw.order, k("order"))?),
        "ramp" => {
            let n = require(raw.n, k("n"))?;
            if !(n > 0.0) {
                return Err(ConfigError::new(k("n"), "must be positive"));
            }
            TestFunction::Ramp(n)
        }
        "heaviside" => TestFunction::Heaviside,
        "bump" => {
            let width = raw.width.unwrap_or(1.0);
            if !(width > 0.0) {
                return Err(ConfigError::new(k("width"), "must be positive"));
            }
            TestFunction::bump(raw.center.unwrap_or(0.0), width)
        }
        "tabulated" => {
            let path = base.join(require(raw.path.as_ref(), k("path"))?);
            let t = Tabulated::from_csv(&path).map_err(|e| ConfigError::new(k("path"), e.to_string()))?;
            TestFunction::Tabulated(Arc::new(t))
        }
        other => {
            return Err(ConfigError::new(
                k("kind"),
                format!("unknown test function `{other}` (hermite, ramp, heaviside, bump, tabulated)"),
            ))
        }
    })
}

fn observable(raw: &RawObservable, i: usize, base: &Path) -> Result<ObservableSpec, ConfigError> {
    let k = |field: &str| format!("observables[{i}].{field}");
    Ok(match raw.kind.as_str() {
        "bond_current" => ObservableSpec::BondCurrent {
            bond: require(raw.bond, k("bond"))?,
        },
        "current_fluct" => ObservableSpec::CurrentFluctuation {
            site: require(raw.site, k("site"))?,
        },
        "moving_bond" => ObservableSpec::MovingBondCurrent {
            anchor: raw.anchor.unwrap_or(0),
        },
        "moving_bond_fluct" => ObservableSpec::MovingBondFluctuation {
            anchor: raw.anchor.unwrap_or(0),
        },
        "tagged_position" => ObservableSpec::TaggedDisplacement,
        "tagged_fluct" => ObservableSpec::TaggedFluctuation,
        "field" => {
            let f = raw.frame.as_deref().unwrap_or("static");
            ObservableSpec::Field {
                h: test_function(require(raw.function.as_ref(), k("function"))?, &k("function"), base)?,
                frame: frame(f).ok_or_else(|| ConfigError::new(k("frame"), "expected static or comoving"))?,
            }
        }
        "bg_integral" => ObservableSpec::BgIntegral {
            h: test_function(require(raw.function.as_ref(), k("function"))?, &k("function"), base)?,
            b: require(raw.b, k("b"))?,
        },
        "tagged_readout_gap" => ObservableSpec::TaggedReadoutGap,
        "current_readout_gap" => ObservableSpec::CurrentReadoutGap {
            site: raw.site.unwrap_or(0),
        },
        other => return Err(ConfigError::new(k("kind"), format!("unknown observable `{other}`"))),
    })
}

fn check_times(times: &[f64], t_max: f64, key: &str) -> Result<(), ConfigError> {
    for &t in times {
        if !(0.0..=t_max).contains(&t) {
            return Err(ConfigError::new(key, format!("time {t} outside [0, t_max = {t_max}]")));
        }
    }
    Ok(())
}

fn build(raw: RawConfig, base: &Path, overrides: Overrides) -> Result<Plan, ConfigError> {
    let rp = &raw.params;
    let mut params = SimParams {
        p: rp.p,
        alpha: rp.alpha,
        n: rp.n,
        gamma: rp.gamma,
        l: rp.l.unwrap_or(0),
        time_scale: time_scale(&rp.time_scale).ok_or_else(|| {
            ConfigError::new("params.time_scale", "expected hyperbolic, longer or diffusive")
        })?,
        t_max: rp.t_max,
    };
    let law = match raw.initial_law.as_str() {
        "bernoulli" => InitialLaw::Bernoulli,
        "bernoulli_star" => InitialLaw::BernoulliStar,
        _ => return Err(ConfigError::new("initial_law", "expected bernoulli or bernoulli_star")),
    };
    let replicas = overrides.replicas.unwrap_or(raw.replicas);
    if replicas == 0 {
        return Err(ConfigError::new("replicas", "must be positive"));
    }
    if raw.observables.is_empty() {
        return Err(ConfigError::new("observables", "at least one observable is required"));
    }

    let observables = raw
        .observables
        .iter()
        .enumerate()
        .map(|(i, o)| observable(o, i, base))
        .collect::<Result<Vec<_>, _>>()?;
    if rp.l.is_none() {
        params.l = derive_ring_size(&params, &observables);
    }
    let v = params.validate();
    if let Some(first) = v.violations.first() {
        let key = if first.field == "l" && rp.l.is_none() {
            "params".to_string()
        } else {
            format!("params.{}", first.field)
        };
        return Err(ConfigError::new(key, first.message.clone()));
    }

    check_times(&raw.checkpoints, params.t_max, "checkpoints")?;
    let mut all: Vec<f64> = raw.checkpoints.clone();
    for (i, o) in raw.observables.iter().enumerate() {
        if let Some(cps) = &o.checkpoints {
            let key = format!("observables[{i}].checkpoints");
            if cps.is_empty() {
                return Err(ConfigError::new(key, "must not be empty"));
            }
            check_times(cps, params.t_max, &key)?;
            all.extend_from_slice(cps);
        }
    }
    all.sort_by(f64::total_cmp);
    all.dedup();
    if all.is_empty() {
        return Err(ConfigError::new("checkpoints", "no checkpoint times given"));
    }
    let index = |t: f64| all.iter().position(|&c| c == t);

    let mut reported = BTreeMap::new();
    for (i, (o, spec)) in raw.observables.iter().zip(&observables).enumerate() {
        let times = o.checkpoints.as_ref().unwrap_or(&raw.checkpoints);
        if times.is_empty() {
            return Err(ConfigError::new(
                format!("observables[{i}].checkpoints"),
                "no checkpoint times for this observable",
            ));
        }
        let mut idx: Vec<usize> = times.iter().filter_map(|&t| index(t)).collect();
        idx.sort_unstable();
        idx.dedup();
        if reported.insert(spec.id(), idx).is_some() {
            return Err(ConfigError::new(format!("observables[{i}]"), "duplicate observable"));
        }
    }

    let expected = raw
        .expected
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let k = |field: &str| format!("expected[{i}].{field}");
            let cps = reported
                .get(&e.observable)
                .ok_or_else(|| ConfigError::new(k("observable"), format!("no observable with id `{}`", e.observable)))?;
            if !cps.iter().any(|&j| all[j] == e.checkpoint) {
                return Err(ConfigError::new(k("checkpoint"), "not a checkpoint of that observable"));
            }
            let statistic = Statistic::parse(&e.statistic)
                .ok_or_else(|| ConfigError::new(k("statistic"), format!("unknown statistic `{}`", e.statistic)))?;
            let comparison = Comparison::parse(&e.comparison)
                .ok_or_else(|| ConfigError::new(k("comparison"), format!("unknown comparison `{}`", e.comparison)))?;
            let has_ci = matches!(statistic, Statistic::Mean | Statistic::Variance | Statistic::SecondMoment);
            if comparison == Comparison::CiCovers && !has_ci {
                return Err(ConfigError::new(k("comparison"), "this statistic has no confidence interval"));
            }
            if e.tolerance < 0.0 {
                return Err(ConfigError::new(k("tolerance"), "must be non-negative"));
            }
            Ok(Expectation {
                name: e.name.clone().unwrap_or_else(|| {
                    format!("{}:{}@{}", e.observable, e.statistic, e.checkpoint)
                }),
                observable: e.observable.clone(),
                checkpoint: e.checkpoint,
                statistic,
                value: e.value,
                tolerance: e.tolerance,
                comparison,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    if law == InitialLaw::Bernoulli && observables.iter().any(|o| o.needs_tagged()) {
        return Err(ConfigError::new("initial_law", "tagged observables need bernoulli_star"));
    }

    Ok(Plan {
        replica_plan: ReplicaPlan {
            experiment: Experiment {
                name: raw.name,
                params,
                law,
                observables,
                checkpoints: all,
                pathwise_checks: true,
            },
            replicas,
            master_seed: overrides.seed.unwrap_or(raw.master_seed),
        },
        reported,
        expected,
    })
}
