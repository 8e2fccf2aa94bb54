//! Acceptance suite: fifteen numbered checks, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the lines appear in order
//! and a failure still lets the remaining checks run. Exits nonzero if any
//! check fails.

use std::process::ExitCode;
use std::time::Instant;

use asep_core::engine::Simulator;
use asep_core::harness::{
    derive_ring_size, run_replicas, Experiment, ObservableSpec, PathwiseReport, ReplicaPlan,
    RunResult,
};
use asep_core::lattice::{sample_initial, Configuration, InitialLaw, SimParams, TimeScale};
use asep_core::observables::Frame;
use asep_core::oracle::{
    bernoulli_measure, build_generator, conditional_expectation_check, decomposition_check,
    stationarity_residual, total_variation, transient_law,
};
use asep_core::rng::derive_seed;
use asep_core::stats::{covariance_jackknife, ks_normal, second_moment_estimate, Accumulator, Estimate, Z99};
use asep_core::test_functions::{apply_k0, inner_product, TestFunction};
use asep_core::zero_range::{
    exclusion_to_zr, sample_geometric_queues, zr_tagged_displacement, zr_to_exclusion, ZrSimulator,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Bound on E[tagged_readout_gap^2] at N = 1000, fixed from a pilot run
/// (0.071 +- 0.018 at R = 2000) before the suite was frozen.
const TAGGED_GAP_BOUND: f64 = 0.1;

struct Suite {
    failures: u32,
    pathwise: PathwiseReport,
    started: Instant,
}

impl Suite {
    fn report(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} {id:>2} {name}: {detail} [{:.0}s]",
            if pass { "PASS" } else { "FAIL" },
            self.started.elapsed().as_secs_f64()
        );
    }

    fn run(
        &mut self,
        name: &str,
        mut params: SimParams,
        law: InitialLaw,
        observables: Vec<ObservableSpec>,
        checkpoints: Vec<f64>,
        replicas: u64,
        master_seed: u64,
    ) -> RunResult {
        params.l = derive_ring_size(&params, &observables);
        let plan = ReplicaPlan {
            experiment: Experiment {
                name: name.to_string(),
                params,
                law,
                observables,
                checkpoints,
                pathwise_checks: true,
            },
            replicas,
            master_seed,
        };
        let result = run_replicas(&plan).unwrap_or_else(|e| panic!("{name}: {e}"));
        let p = &result.pathwise;
        self.pathwise.conservation_checks += p.conservation_checks;
        self.pathwise.conservation_violations += p.conservation_violations;
        self.pathwise.relation_checks += p.relation_checks;
        self.pathwise.relation_violations += p.relation_violations;
        result
    }
}

fn params(p: f64, alpha: f64, n: u64, gamma: f64, time_scale: TimeScale, t_max: f64) -> SimParams {
    SimParams {
        p,
        alpha,
        n,
        gamma,
        l: 0,
        time_scale,
        t_max,
    }
}

fn fmt_est(e: &Estimate) -> String {
    format!("{:.4e} [{:.4e}, {:.4e}]", e.value, e.low, e.high)
}

/// Point estimates strictly decreasing along the grid.
fn strictly_decreasing(est: &[Estimate]) -> bool {
    est.windows(2).all(|w| w[1].value < w[0].value)
}

fn fmt_grid(grid: &[u64], est: &[Estimate]) -> String {
    grid.iter()
        .zip(est)
        .map(|(n, e)| format!("N={n}: {}", fmt_est(e)))
        .collect::<Vec<_>>()
        .join("; ")
}

fn rel_err(measured: f64, target: f64) -> f64 {
    (measured - target).abs() / target.abs()
}

fn chi_square_geometric(samples: &[u32], alpha: f64) -> f64 {
    let cells = 12usize;
    let n = samples.len() as f64;
    let mut obs = vec![0f64; cells];
    for &s in samples {
        obs[(s as usize).min(cells - 1)] += 1.0;
    }
    let stat: f64 = obs
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let prob = if k + 1 == cells {
                (1.0 - alpha).powi(k as i32)
            } else {
                alpha * (1.0 - alpha).powi(k as i32)
            };
            let e = n * prob;
            (o - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

fn main() -> ExitCode {
    let mut s = Suite {
        failures: 0,
        pathwise: PathwiseReport::default(),
        started: Instant::now(),
    };

    // 1. stationarity of the Bernoulli product law, exact
    let mut worst = 0.0f64;
    for l in 2..=8 {
        for p in [0.5, 0.6, 0.7, 0.9, 1.0] {
            let gen = build_generator(l, p).unwrap();
            for k in 1..=9 {
                worst = worst.max(stationarity_residual(&gen, k as f64 / 10.0));
            }
        }
    }
    s.report(1, "exact stationarity", worst < 1e-12, format!("max residual {worst:.2e} (< 1e-12)"));

    // 2. simulator law against uniformization
    {
        let p = SimParams {
            l: 6,
            ..params(0.7, 0.5, 1, 0.0, TimeScale::Hyperbolic, 2.0)
        };
        let samples = 100_000u64;
        let mut counts = vec![0f64; 64];
        for r in 0..samples {
            let c = sample_initial(InitialLaw::Bernoulli, &p, derive_seed(2, 2 * r));
            let mut sim = Simulator::on_closed_ring(p.clone(), c, derive_seed(2, 2 * r + 1)).unwrap();
            sim.advance_to_scaled(2.0).unwrap();
            counts[sim.config().state_index() as usize] += 1.0 / samples as f64;
        }
        let exact = transient_law(&build_generator(6, 0.7).unwrap(), &bernoulli_measure(6, 0.5), 2.0).unwrap();
        let tv = total_variation(&counts, &exact);
        s.report(2, "law exactness", tv < 0.02, format!("TV {tv:.4} (< 0.02, 1e5 samples)"));
    }

    // 3. current decomposition identity
    let mut worst = 0.0f64;
    for i in 1..=9 {
        for p in [0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
            worst = worst.max(decomposition_check(p, i as f64 / 10.0));
        }
    }
    s.report(3, "decomposition identity", worst <= 1e-14, format!("max deviation {worst:.2e} (<= 1e-14)"));

    // 4. block conditional expectation
    let mut worst = 0.0f64;
    for k in 2..=8 {
        for alpha in [0.2, 0.5, 0.8] {
            worst = worst.max(conditional_expectation_check(k, alpha).unwrap());
        }
    }
    s.report(4, "conditional expectation", worst < 1e-12, format!("max deviation {worst:.2e} (< 1e-12)"));

    // 15 runs early: it is cheap and exact
    let mut ortho = 0.0f64;
    for i in 0..=10u32 {
        for j in 0..=10u32 {
            let ip = inner_product(&TestFunction::Hermite(i), &TestFunction::Hermite(j)).unwrap();
            let target = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((ip - target).abs());
        }
    }
    let mut eigen = 0.0f64;
    for z in 0..=5u32 {
        let h = TestFunction::Hermite(z);
        for i in -600..=600 {
            let u = i as f64 * 0.01;
            let residual = apply_k0(&h, u).unwrap() - (2 * z + 1) as f64 * h.eval(u);
            eigen = eigen.max(residual.abs());
        }
    }
    let hermite_pass = ortho < 1e-8 && eigen < 1e-5;
    let hermite_detail = format!("orthonormality {ortho:.2e} (< 1e-8), eigen residual {eigen:.2e} (< 1e-5)");

    // 5, 6 and the top of the tagged readout grid share one run
    let tagged_obs = vec![
        ObservableSpec::TaggedDisplacement,
        ObservableSpec::TaggedFluctuation,
        ObservableSpec::TaggedReadoutGap,
    ];
    let tagged_cps = vec![0.25, 0.5, 0.75, 1.0];
    let tag1000 = s.run(
        "tagged_n1000",
        params(1.0, 0.5, 1000, 0.0, TimeScale::Hyperbolic, 1.0),
        InitialLaw::BernoulliStar,
        tagged_obs.clone(),
        tagged_cps.clone(),
        2000,
        0x7A66_0001,
    );
    {
        let x = &tag1000.series("tagged_position", 3)[..500];
        let mean = x.iter().sum::<f64>() / 500.0 / 1000.0;
        s.report(
            5,
            "tagged LLN",
            (mean - 0.5).abs() <= 0.01,
            format!("mean X/N {mean:.4} (0.5 +- 0.01, R=500)"),
        );
    }
    {
        let fl = tag1000.series("tagged_fluct", 3);
        let acc = Accumulator::from_slice(fl);
        let var = acc.variance();
        let (vlo, vhi) = acc.variance_ci();
        let (_, ks_p) = ks_normal(fl);
        let skew = acc.skewness();
        let pass = rel_err(var, 0.5) <= 0.07 && ks_p > 0.001 && skew.abs() < 0.15;
        s.report(
            6,
            "tagged CLT",
            pass,
            format!(
                "var {var:.4} [{vlo:.4}, {vhi:.4}] (0.5 +- 7%), KS p {ks_p:.3} (> 0.001), skew {skew:.3} (|.| < 0.15), R=2000"
            ),
        );
    }

    // 7, 8 and the middle of the current readout grid
    let bump = TestFunction::bump(0.0, 1.0);
    let cur500 = s.run(
        "current_n500",
        params(0.8, 0.3, 500, 0.0, TimeScale::Hyperbolic, 1.0),
        InitialLaw::Bernoulli,
        vec![
            ObservableSpec::BondCurrent { bond: -1 },
            ObservableSpec::CurrentFluctuation { site: 0 },
            ObservableSpec::Field {
                h: bump.clone(),
                frame: Frame::Comoving,
            },
            ObservableSpec::Field {
                h: bump.clone(),
                frame: Frame::Static,
            },
            ObservableSpec::CurrentReadoutGap { site: 0 },
        ],
        vec![0.0, 0.5, 1.0],
        4000,
        0x7A66_0002,
    );
    {
        let chi = 0.21;
        let j = cur500.accumulator("bond_current[-1]", 2);
        let rate = j.mean() / 500.0;
        let (lo, hi) = j.mean_ci();
        let cov = covariance_jackknife(cur500.series("current_fluct[0]", 1), cur500.series("current_fluct[0]", 2));
        let cov_target = chi * 0.24 * 0.5;
        let pass = rel_err(rate, 0.126) <= 0.05 && rel_err(cov.value, cov_target) <= 0.10;
        s.report(
            7,
            "current mean and covariance",
            pass,
            format!(
                "E[J]/(tN) {rate:.4} [{:.4}, {:.4}] (0.126 +- 5%), Cov(Z_0.5, Z_1) {} ({cov_target:.4} +- 10%)",
                lo / 500.0,
                hi / 500.0,
                fmt_est(&cov)
            ),
        );
    }
    {
        let chi = 0.21;
        let comoving = format!("field[{};comoving]", bump.label());
        let fixed = format!("field[{};static]", bump.label());
        let moved = Accumulator::from_slice(&cur500.combine((&comoving, 1), (&fixed, 0), |a, b| a * b));
        let still = Accumulator::from_slice(&cur500.combine((&fixed, 1), (&fixed, 0), |a, b| a * b));
        // v t = 0.24 * 0.5; H(u + vt) is the bump recentred at -vt
        let overlap = inner_product(&bump, &TestFunction::bump(-0.12, 1.0)).unwrap();
        let still_target = chi * overlap;
        let pass = rel_err(moved.mean(), chi) <= 0.10 && rel_err(still.mean(), still_target) <= 0.10;
        let (mlo, mhi) = moved.mean_ci();
        let (slo, shi) = still.mean_ci();
        s.report(
            8,
            "field translation",
            pass,
            format!(
                "translated {:.4} [{mlo:.4}, {mhi:.4}] ({chi} +- 10%), fixed {:.4} [{slo:.4}, {shi:.4}] ({still_target:.4} +- 10%)",
                moved.mean(),
                still.mean()
            ),
        );
    }

    // 9 and 10 share the longer-scale runs
    let grid_bg = [125u64, 250, 500, 1000];
    let mut rigidity = Vec::new();
    let mut bg = Vec::new();
    let comoving = ObservableSpec::Field {
        h: bump.clone(),
        frame: Frame::Comoving,
    };
    let bg_obs = ObservableSpec::BgIntegral { h: bump.clone(), b: 0.2 };
    for (i, &n) in grid_bg.iter().enumerate() {
        let mut obs = vec![bg_obs.clone()];
        let (reps, cps) = if n <= 500 {
            obs.push(comoving.clone());
            (2000, vec![0.0, 0.5])
        } else {
            (1000, vec![0.5])
        };
        let r = s.run(
            &format!("longer_n{n}"),
            params(0.8, 0.3, n, 0.2, TimeScale::Longer, 0.5),
            InitialLaw::Bernoulli,
            obs,
            cps.clone(),
            reps,
            0x7A66_0100 + i as u64,
        );
        let last = cps.len() - 1;
        bg.push(second_moment_estimate(r.series(&bg_obs.id(), last)));
        if n <= 500 {
            let id = comoving.id();
            rigidity.push(second_moment_estimate(&r.combine((&id, 1), (&id, 0), |a, b| a - b)));
        }
    }
    {
        let bound = 0.1 * 0.21;
        let pass = strictly_decreasing(&rigidity) && rigidity[2].value < bound;
        s.report(
            9,
            "longer-scale rigidity",
            pass,
            format!("E[(Y_t - Y_0)^2] {} (decreasing, < {bound:.4} at N=500)", fmt_grid(&grid_bg[..3], &rigidity)),
        );
    }
    let mut ssep = Vec::new();
    let ssep_t = 0.001;
    let ssep_obs = ObservableSpec::BgIntegral { h: bump.clone(), b: 0.25 };
    for (i, (&n, reps)) in grid_bg.iter().zip([8000u64, 8000, 3000, 1000]).enumerate() {
        let r = s.run(
            &format!("ssep_n{n}"),
            params(0.5, 0.5, n, 0.0, TimeScale::Diffusive, ssep_t),
            InitialLaw::Bernoulli,
            vec![ssep_obs.clone()],
            vec![ssep_t],
            reps,
            0x7A66_0200 + i as u64,
        );
        ssep.push(second_moment_estimate(r.series(&ssep_obs.id(), 0)));
    }
    s.report(
        10,
        "Boltzmann-Gibbs decay",
        strictly_decreasing(&bg) && strictly_decreasing(&ssep),
        format!(
            "asymmetric E[bg^2] {} | symmetric E[bg^2] {} (both decreasing)",
            fmt_grid(&grid_bg, &bg),
            fmt_grid(&grid_bg, &ssep)
        ),
    );

    // 11: readout gaps
    let grid = [250u64, 500, 1000];
    let mut tagged_gap = Vec::new();
    let mut zr_exclusion = Vec::new();
    for (i, &n) in grid[..2].iter().enumerate() {
        let r = s.run(
            &format!("tagged_n{n}"),
            params(1.0, 0.5, n, 0.0, TimeScale::Hyperbolic, 1.0),
            InitialLaw::BernoulliStar,
            tagged_obs.clone(),
            tagged_cps.clone(),
            4000,
            0x7A66_0300 + i as u64,
        );
        tagged_gap.push(second_moment_estimate(r.series("tagged_readout_gap", 3)));
        if n == 500 {
            zr_exclusion = r.series("tagged_position", 3)[..2000].to_vec();
        }
    }
    tagged_gap.push(second_moment_estimate(tag1000.series("tagged_readout_gap", 3)));

    let mut current_gap = Vec::new();
    for (i, (&n, reps)) in grid.iter().zip([4000u64, 0, 2000]).enumerate() {
        if n == 500 {
            current_gap.push(second_moment_estimate(cur500.series("current_readout_gap[0]", 2)));
            continue;
        }
        let r = s.run(
            &format!("current_n{n}"),
            params(0.8, 0.3, n, 0.0, TimeScale::Hyperbolic, 1.0),
            InitialLaw::Bernoulli,
            vec![ObservableSpec::CurrentReadoutGap { site: 0 }],
            vec![0.5, 1.0],
            reps,
            0x7A66_0400 + i as u64,
        );
        current_gap.push(second_moment_estimate(r.series("current_readout_gap[0]", 1)));
    }

    let long_t = 0.1;
    let mut long_gap = Vec::new();
    for (i, &n) in grid.iter().enumerate() {
        let r = s.run(
            &format!("tagged_longer_n{n}"),
            params(1.0, 0.5, n, 0.2, TimeScale::Longer, long_t),
            InitialLaw::BernoulliStar,
            vec![ObservableSpec::TaggedReadoutGap],
            vec![long_t / 2.0, long_t],
            4000,
            0x7A66_0500 + i as u64,
        );
        long_gap.push(second_moment_estimate(r.series("tagged_readout_gap", 1)));
    }
    s.report(
        11,
        "initial-configuration readout",
        strictly_decreasing(&tagged_gap)
            && tagged_gap[2].value < TAGGED_GAP_BOUND
            && strictly_decreasing(&current_gap)
            && strictly_decreasing(&long_gap),
        format!(
            "tagged {} (< {TAGGED_GAP_BOUND} at N=1000) | current {} | longer (t={long_t}) {} (all decreasing)",
            fmt_grid(&grid, &tagged_gap),
            fmt_grid(&grid, &current_gap),
            fmt_grid(&grid, &long_gap)
        ),
    );

    // 12: moving bond
    let grid_mb = [150u64, 300, 600];
    let mut mb_m2 = Vec::new();
    let mut mean_line = String::new();
    let mut mean_pass = false;
    for (i, (&n, reps)) in grid_mb.iter().zip([4000u64, 4000, 2000]).enumerate() {
        let p = params(0.7, 0.3, n, 0.2, TimeScale::Longer, 0.5);
        let target = p.drift() * 0.09 * p.physical_time(0.5);
        let r = s.run(
            &format!("moving_bond_n{n}"),
            p,
            InitialLaw::Bernoulli,
            vec![
                ObservableSpec::MovingBondCurrent { anchor: 0 },
                ObservableSpec::MovingBondFluctuation { anchor: 0 },
            ],
            vec![0.25, 0.5],
            reps,
            0x7A66_0600 + i as u64,
        );
        mb_m2.push(second_moment_estimate(r.series("moving_bond_fluct[0]", 1)));
        if n == 300 {
            let acc = Accumulator::from_slice(&r.series("moving_bond[0]", 1)[..2000]);
            let (lo, hi) = acc.mean_ci();
            mean_pass = lo <= target && target <= hi;
            mean_line = format!("mean {:.3} [{lo:.3}, {hi:.3}] covers {target:.3} at N=300, R=2000", acc.mean());
        }
    }
    s.report(
        12,
        "moving-bond current",
        mean_pass && strictly_decreasing(&mb_m2),
        format!("{mean_line}; E[(Jbar/sqrt N)^2] {} (decreasing)", fmt_grid(&grid_mb, &mb_m2)),
    );

    // 13: zero-range
    {
        let mut roundtrip_ok = true;
        let mut checked = 0u64;
        for l in 1..=12usize {
            for idx in 0..(1u64 << l) {
                let c = Configuration::from_state_index(idx, l);
                let sites: Vec<usize> = c.particle_sites().collect();
                for t in sites {
                    let mut c = c.clone();
                    c.set_tagged(t);
                    let q = exclusion_to_zr(&c).unwrap();
                    roundtrip_ok &= zr_to_exclusion(&q, t, l).map(|b| b == c).unwrap_or(false);
                    checked += 1;
                }
            }
            let p = SimParams {
                l,
                ..params(0.5, 0.5, 1, 0.0, TimeScale::Hyperbolic, 0.0)
            };
            for r in 0..100_000u64 {
                let c = sample_initial(InitialLaw::BernoulliStar, &p, derive_seed(13, r));
                let q = exclusion_to_zr(&c).unwrap();
                roundtrip_ok &= zr_to_exclusion(&q, 0, l).map(|b| b == c).unwrap_or(false);
                checked += 1;
            }
        }

        let alpha = 0.5;
        let star = SimParams {
            l: 4096,
            ..params(1.0, alpha, 1, 0.0, TimeScale::Hyperbolic, 0.0)
        };
        let mut gaps = Vec::new();
        let mut r = 0;
        while gaps.len() < 100_000 {
            let c = sample_initial(InitialLaw::BernoulliStar, &star, derive_seed(1313, r));
            gaps.extend(exclusion_to_zr(&c).unwrap().queues.iter().take(1000));
            r += 1;
        }
        gaps.truncate(100_000);
        let p_star = chi_square_geometric(&gaps, alpha);
        let mut evolved = Vec::new();
        for r in 0..100u64 {
            let q = sample_geometric_queues(1000, alpha, derive_seed(1314, 2 * r)).unwrap();
            let mut z = ZrSimulator::new(q, 1.0, derive_seed(1314, 2 * r + 1)).unwrap();
            z.advance_to(50.0).unwrap();
            evolved.extend_from_slice(z.queues());
        }
        let p_evolved = chi_square_geometric(&evolved, alpha);

        // exclusion side comes from the N = 500 tagged run: p = 1, horizon 500
        let mut zr = Vec::with_capacity(2000);
        for r in 0..2000u64 {
            let q = sample_geometric_queues(1024, alpha, derive_seed(1315, 2 * r)).unwrap();
            let mut z = ZrSimulator::new(q, 1.0, derive_seed(1315, 2 * r + 1)).unwrap();
            z.advance_to(500.0).unwrap();
            zr.push(zr_tagged_displacement(&z) as f64);
        }
        let a = Accumulator::from_slice(&zr_exclusion);
        let b = Accumulator::from_slice(&zr);
        let mean_half = Z99 * (a.variance() / a.count() as f64 + b.variance() / b.count() as f64).sqrt();
        let var_se = |acc: &Accumulator| {
            let (lo, hi) = acc.variance_ci();
            (hi - lo) / (2.0 * Z99)
        };
        let var_half = Z99 * (var_se(&a).powi(2) + var_se(&b).powi(2)).sqrt();
        let mean_ok = (a.mean() - b.mean()).abs() <= mean_half;
        let var_ok = (a.variance() - b.variance()).abs() <= var_half;
        let pass = roundtrip_ok && p_star > 0.001 && p_evolved > 0.001 && mean_ok && var_ok;
        s.report(
            13,
            "zero-range cross-validation",
            pass,
            format!(
                "roundtrip {} ({checked} cases), gap chi2 p {p_star:.3} / evolved {p_evolved:.3} (> 0.001), \
                 mean {:.2} vs {:.2} (|diff| <= {mean_half:.2}), var {:.1} vs {:.1} (|diff| <= {var_half:.1})",
                if roundtrip_ok { "exact" } else { "BROKEN" },
                a.mean(),
                b.mean(),
                a.variance(),
                b.variance()
            ),
        );
    }

    let pw = s.pathwise;
    s.report(
        14,
        "pathwise identities",
        pw.violations() == 0 && pw.conservation_checks > 0 && pw.relation_checks > 0,
        format!(
            "{} conservation checks, {} violations; {} tagged-current checks, {} violations",
            pw.conservation_checks, pw.conservation_violations, pw.relation_checks, pw.relation_violations
        ),
    );
    s.report(15, "Hermite suite", hermite_pass, hermite_detail);

    println!(
        "acceptance: {} of 15 passed in {:.0}s",
        15 - s.failures,
        s.started.elapsed().as_secs_f64()
    );
    if s.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
