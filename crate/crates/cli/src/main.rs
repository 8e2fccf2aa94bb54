//! `asep`: run one experiment config and write its tables and report.
//!
//! Exit codes: 0 when every acceptance entry passes, 1 when one fails,
//! 2 for config errors, 3 for runtime failures (I/O, engine errors).

mod config;
mod output;

use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use asep_core::harness::{run_replicas, run_replicas_with_threads, trace_replica};
use clap::Parser;

use config::{Overrides, Plan};

#[derive(Debug, Parser)]
#[command(name = "asep", version, about = "Replica experiments for the asymmetric simple exclusion process")]
struct Args {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Directory for the CSV tables and acceptance.json.
    #[arg(short, long, default_value = "results")]
    out: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's replica count.
    #[arg(long)]
    replicas: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Validate, print the ring size and the event estimate, then stop.
    #[arg(long)]
    dry_run: bool,
    /// Also write the binary event trace of replica 0 to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn dry_run(plan: &Plan) {
    let rp = &plan.replica_plan;
    let e = &rp.experiment;
    println!("experiment: {}", e.name);
    println!("ring size L: {}", e.params.l);
    println!("physical horizon: {}", e.params.physical_horizon());
    println!("replicas: {}", rp.replicas);
    println!("checkpoints: {:?}", e.checkpoints);
    println!(
        "expected jump attempts: {:.3e} ({:.3e} per replica)",
        rp.expected_attempts(),
        e.expected_attempts()
    );
}

fn run(args: &Args, plan: &Plan) -> Result<bool> {
    let rp = &plan.replica_plan;
    let result = match args.threads {
        Some(t) => run_replicas_with_threads(rp, t),
        None => run_replicas(rp),
    }
    .context("running replicas")?;

    for path in output::write_csvs(&args.out, plan, &result)? {
        println!("wrote {}", path.display());
    }
    let report = output::evaluate(plan, &result);
    let path = output::write_report(&args.out, &report)?;
    println!("wrote {}", path.display());

    if let Some(trace) = &args.trace {
        let file = File::create(trace).with_context(|| format!("creating {}", trace.display()))?;
        let jumps = trace_replica(rp, 0, Box::new(file)).context("writing trace")?;
        println!("wrote {} (replica 0, {jumps} executed jumps)", trace.display());
    }

    if report.pathwise_violations > 0 {
        println!("FAIL pathwise identities: {} violations", report.pathwise_violations);
    }
    for e in &report.entries {
        let ci = match (e.ci_low, e.ci_high) {
            (Some(lo), Some(hi)) => format!(" [{lo:.6}, {hi:.6}]"),
            _ => String::new(),
        };
        println!(
            "{} {}: measured {:.6}{ci}, expected {} ({} {})",
            if e.pass { "PASS" } else { "FAIL" },
            e.name,
            e.measured,
            e.expected,
            e.comparison,
            e.tolerance
        );
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        seed: args.seed,
        replicas: args.replicas,
    };
    let plan = match config::load(&args.config, overrides) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if args.threads == Some(0) {
        eprintln!("--threads must be positive");
        return ExitCode::from(2);
    }
    if args.dry_run {
        dry_run(&plan);
        return ExitCode::SUCCESS;
    }
    match run(&args, &plan) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
