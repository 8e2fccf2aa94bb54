//! CSV tables and the acceptance report.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use asep_core::harness::RunResult;
use asep_core::stats::{ks_normal, second_moment_estimate, Accumulator};
use serde::Serialize;

use crate::config::{Comparison, Expectation, Plan, Statistic};

pub const CSV_HEADER: [&str; 8] = [
    "experiment",
    "observable",
    "checkpoint_t",
    "replica_stat",
    "value",
    "ci_low",
    "ci_high",
    "n",
];

/// Value of a statistic over replica samples and its 99% interval when one
/// is defined.
pub fn statistic(samples: &[f64], stat: Statistic) -> (f64, Option<(f64, f64)>) {
    let acc = Accumulator::from_slice(samples);
    match stat {
        Statistic::Mean => (acc.mean(), Some(acc.mean_ci())),
        Statistic::Variance => (acc.variance(), Some(acc.variance_ci())),
        Statistic::SecondMoment => {
            let e = second_moment_estimate(samples);
            (e.value, Some((e.low, e.high)))
        }
        Statistic::Skewness => (acc.skewness(), None),
        Statistic::ExcessKurtosis => (acc.excess_kurtosis(), None),
        Statistic::KsPvalue => (ks_normal(samples).1, None),
    }
}

/// File name for an observable id: anything outside `[A-Za-z0-9._-]`
/// becomes `_`.
pub fn csv_name(id: &str) -> String {
    let mut s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    while s.ends_with('_') {
        s.pop();
    }
    s + ".csv"
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_csvs(dir: &Path, plan: &Plan, result: &RunResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for id in &result.observables {
        let path = dir.join(csv_name(id));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(CSV_HEADER)?;
        for &k in &plan.reported[id] {
            let samples = result.series(id, k);
            let t = result.checkpoints[k].to_string();
            let n = samples.len().to_string();
            for stat in Statistic::ALL {
                let (value, ci) = statistic(samples, stat);
                w.write_record([
                    result.name.as_str(),
                    id,
                    &t,
                    stat.name(),
                    &value.to_string(),
                    &cell(ci.map(|c| c.0)),
                    &cell(ci.map(|c| c.1)),
                    &n,
                ])?;
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub name: String,
    pub experiment: String,
    pub observable: String,
    pub checkpoint_t: f64,
    pub statistic: &'static str,
    pub comparison: &'static str,
    pub measured: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub replicas: u64,
    pub master_seed: u64,
    pub pathwise_violations: u64,
    pub pass: bool,
    pub entries: Vec<Entry>,
}

fn judge(e: &Expectation, measured: f64, ci: Option<(f64, f64)>) -> bool {
    let diff = (measured - e.value).abs();
    match e.comparison {
        Comparison::Relative => diff <= e.tolerance * e.value.abs(),
        Comparison::Absolute => diff <= e.tolerance,
        Comparison::CiCovers => ci.is_some_and(|(lo, hi)| lo <= e.value && e.value <= hi),
        Comparison::LessThan => measured < e.value,
        Comparison::GreaterThan => measured > e.value,
    }
}

pub fn evaluate(plan: &Plan, result: &RunResult) -> Report {
    let checkpoints = &result.checkpoints;
    let entries: Vec<Entry> = plan
        .expected
        .iter()
        .map(|e| {
            let k = checkpoints
                .iter()
                .position(|&t| t == e.checkpoint)
                .expect("expectation checkpoints are validated at load");
            let (measured, ci) = statistic(result.series(&e.observable, k), e.statistic);
            Entry {
                name: e.name.clone(),
                experiment: result.name.clone(),
                observable: e.observable.clone(),
                checkpoint_t: e.checkpoint,
                statistic: e.statistic.name(),
                comparison: e.comparison.name(),
                measured,
                ci_low: ci.map(|c| c.0),
                ci_high: ci.map(|c| c.1),
                expected: e.value,
                tolerance: e.tolerance,
                pass: judge(e, measured, ci),
            }
        })
        .collect();
    let violations = result.pathwise.violations();
    Report {
        experiment: result.name.clone(),
        replicas: result.replicas,
        master_seed: plan.replica_plan.master_seed,
        pathwise_violations: violations,
        pass: violations == 0 && entries.iter().all(|e| e.pass),
        entries,
    }
}

pub fn write_report(dir: &Path, report: &Report) -> Result<PathBuf> {
    let path = dir.join("acceptance.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
