//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::Command;

use rand::Rng;

use direct_functionals::basis::bernstein_weights;
use direct_functionals::datasets::rng_from_seed;
use direct_functionals::estimators::basis_weights_for;
use direct_functionals::functionals::GridKind;
use direct_functionals::harness::ResultTable;
use direct_functionals::optimize::{max_reconstruction_error, reconstruction_mse};
use direct_functionals::oracles::{analytic_equal_cov_ber, asymptotic_rho, error_decomposition, true_ber, BerMethod};
use direct_functionals::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn bounds_table(experiment: Option<u32>, fukunaga: Option<u32>, n: usize, trials: usize) -> ResultTable {
    let cfg = ExperimentConfig {
        experiment,
        fukunaga,
        functional: MapFamily::Ber,
        methods: vec![Method::ConvexBound, Method::DpBound, Method::BcBound],
        n_values: vec![n],
        trials,
        ..Default::default()
    };
    let table = run_bounds_experiment(&cfg).expect("bounds experiment runs");
    assert_eq!(table.failures().count(), 0, "bounds experiment had failing cells");
    table
}

fn mean_of(table: &ResultTable, m: Method, n: usize) -> (f64, f64) {
    let a = table.aggregate_for(m, n).expect("aggregate present");
    (a.mean, a.std)
}

fn criterion_1() -> Outcome {
    let t1 = bounds_table(None, Some(1), 1000, 500);
    let t2 = bounds_table(None, Some(2), 1000, 500);
    let (cv, _) = mean_of(&t1, Method::ConvexBound, 1000);
    let (dp, _) = mean_of(&t1, Method::DpBound, 1000);
    let (bc, _) = mean_of(&t1, Method::BcBound, 1000);
    let (cv2, _) = mean_of(&t2, Method::ConvexBound, 1000);
    let ok = (0.130..=0.155).contains(&cv)
        && (0.150..=0.180).contains(&dp)
        && (0.205..=0.230).contains(&bc)
        && (0.032..=0.046).contains(&cv2);
    outcome(
        ok,
        format!(
            "set 1: convex {} (13.0-15.5), dp {} (15.0-18.0), bc {} (20.5-23.0); set 2: convex {} (3.2-4.6)",
            pct(cv),
            pct(dp),
            pct(bc),
            pct(cv2)
        ),
    )
}

fn criterion_2() -> Outcome {
    let set1 = analytic_equal_cov_ber(&direct_functionals::datasets::fukunaga_pair(1).unwrap()).unwrap();
    let set2 = true_ber(&direct_functionals::datasets::fukunaga_pair(2).unwrap(), BerMethod::Mc, 1_000_000, 0).unwrap();
    let phi = 0.10027256795444206; // Phi(-1.28)
    let ok = (set1 - phi).abs() <= 1e-3 && (set1 - 0.100).abs() <= 1e-3 && (set2.value - 0.019).abs() <= 1.5e-3;
    outcome(
        ok,
        format!(
            "set 1 BER {} (10.0 +/- 0.1), set 2 BER {} +/- {:.3}% (1.90 +/- 0.15)",
            pct(set1),
            pct(set2.value),
            100.0 * set2.std_error
        ),
    )
}

fn criterion_3() -> Outcome {
    let n = 10_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for e in 1..=4 {
        let t = bounds_table(Some(e), None, n, 50);
        let truth = t.truth.value;
        let (cv, scv) = mean_of(&t, Method::ConvexBound, n);
        let (dp, sdp) = mean_of(&t, Method::DpBound, n);
        let (bc, sbc) = mean_of(&t, Method::BcBound, n);
        let ordered = cv <= dp && dp <= bc;
        let above = cv >= truth - 2.0 * scv && dp >= truth - 2.0 * sdp && bc >= truth - 2.0 * sbc;
        ok &= ordered && above;
        parts.push(format!("exp{e}: ber {} convex {} dp {} bc {}", pct(truth), pct(cv), pct(dp), pct(bc)));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let mut worst_residual = 0.0f64;
    let mut worst_gap = 0.0f64;
    for k in [2, 3, 5, 10, 20] {
        for p0 in [0.5, 0.3] {
            let g = PosteriorMap::dp(p0).unwrap();
            let cfg = FitConfig::new(k, 0.0);
            let w = fit(&g, &cfg, None).unwrap();
            worst_residual = worst_residual.max(max_reconstruction_error(&w, &g, &cfg.grid).unwrap());

            let ds = make_experiment_dataset(2, 500, 3, k as u64).unwrap();
            let (q0, _) = ds.priors();
            let g = PosteriorMap::dp(q0).unwrap();
            let rho = rho_stats(&ds, k, NeighborSearch::KdTree).unwrap();
            let wu = basis_weights_for(&g, &cfg, Method::ConvexUniform, &rho).unwrap();
            let wd =
                basis_weights_for(&g, &cfg.clone().with_weighting(Weighting::Density), Method::ConvexDensity, &rho)
                    .unwrap();
            let gap = (wu.apply(rho.values()).unwrap() - wd.apply(rho.values()).unwrap()).abs();
            worst_gap = worst_gap.max(gap);
        }
    }
    outcome(
        worst_residual <= 1e-9 && worst_gap <= 1e-9,
        format!("max grid residual {worst_residual:.2e} (<= 1e-9), uniform vs density gap {worst_gap:.2e} (<= 1e-9)"),
    )
}

fn rho_error(k: usize, n: usize, trials: u64, star: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in 0..trials {
        let ds = make_experiment_dataset(1, n / 2, 3, t).unwrap();
        let rho = rho_stats(&ds, k, NeighborSearch::KdTree).unwrap();
        total += rho.values().iter().zip(star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    total / trials as f64
}

fn criterion_5() -> Outcome {
    let pair = Experiment::from_id(1).unwrap().class_pair(3).unwrap();
    let star10 = asymptotic_rho(&pair, 10, 1_000_000, 1).unwrap().values;
    let star100 = asymptotic_rho(&pair, 100, 1_000_000, 1).unwrap().values;
    let e: Vec<f64> = [200, 2000, 20_000].iter().map(|&n| rho_error(10, n, 50, &star10)).collect();
    let e100 = rho_error(100, 2000, 50, &star100);
    let ok = e[0] > e[1] && e[1] > e[2] && e[1] < e100;
    outcome(
        ok,
        format!(
            "k=10 error {:.2e} > {:.2e} > {:.2e}; at N=2000 k=10 {:.2e} < k=100 {e100:.2e}",
            e[0], e[1], e[2], e[1]
        ),
    )
}

fn criterion_6() -> Outcome {
    let g = PosteriorMap::hellinger_sq(0.5, 0.5).unwrap();
    // 1001 points so the k = 160 fit is not underdetermined.
    let grid = PosteriorGrid::uniform(1001).unwrap();
    let mut bern = Vec::new();
    let mut convex = Vec::new();
    for k in [10, 40, 160] {
        let b = bernstein_weights(&g, k, EndpointPolicy::Exact).unwrap();
        bern.push(reconstruction_mse(&b, &g, &grid).unwrap());
        let c = fit(&g, &FitConfig::new(k, 0.0).with_grid(grid.clone()), None).unwrap();
        convex.push(reconstruction_mse(&c, &g, &grid).unwrap());
    }
    let ok = bern[0] > bern[1] && bern[1] > bern[2] && convex.iter().zip(&bern).all(|(c, b)| c <= b);
    outcome(
        ok,
        format!(
            "bernstein MSE {:.2e} > {:.2e} > {:.2e}; convex {:.2e}, {:.2e}, {:.2e}",
            bern[0], bern[1], bern[2], convex[0], convex[1], convex[2]
        ),
    )
}

fn criterion_7() -> Outcome {
    let sizes = [500, 2000, 8000];
    let mut ok = true;
    let mut parts = Vec::new();
    for (family, grid, truth, limit) in [
        (MapFamily::HellingerSq, GridKind::Standard, 1.0 - (-0.125f64).exp(), 0.05),
        (MapFamily::Kl01, GridKind::KlClipped, 0.5, 0.1),
    ] {
        let cfg = ExperimentConfig {
            functional: family,
            grid,
            methods: vec![Method::ConvexUniform],
            n_values: sizes.to_vec(),
            trials: 50,
            ..Default::default()
        };
        let table = run_divergence_experiment(&cfg).unwrap();
        assert!((table.truth.value - truth).abs() < 1e-12, "oracle disagrees with the closed form");
        let mae: Vec<f64> = sizes
            .iter()
            .map(|&n| {
                let errs: Vec<f64> =
                    table.rows.iter().filter(|r| r.n == n).map(|r| r.error.expect("cell succeeded").abs()).collect();
                errs.iter().sum::<f64>() / errs.len() as f64
            })
            .collect();
        ok &= mae[0] > mae[1] && mae[1] > mae[2] && mae[2] <= limit;
        parts.push(format!("{}: MAE {:.4} > {:.4} > {:.4} (final <= {limit})", family.name(), mae[0], mae[1], mae[2]));
    }
    outcome(ok, parts.join("; "))
}

fn random_map(rng: &mut impl Rng) -> (PosteriorMap, GridKind) {
    let p0 = rng.random_range(0.2..0.8);
    match rng.random_range(0..5) {
        0 => (PosteriorMap::hellinger_sq(p0, 1.0 - p0).unwrap(), GridKind::Standard),
        1 => (PosteriorMap::dp(p0).unwrap(), GridKind::Standard),
        2 => (PosteriorMap::kl01(p0, 1.0 - p0).unwrap(), GridKind::KlClipped),
        3 => (PosteriorMap::kl10(p0, 1.0 - p0).unwrap(), GridKind::KlClipped),
        _ => (PosteriorMap::ber(), GridKind::Standard),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = rng_from_seed(8);
    let mut worst_slack = f64::INFINITY;
    let mut worst_kkt = 0.0f64;
    for _ in 0..100 {
        let (g, grid) = random_map(&mut rng);
        let k = rng.random_range(2..=30);
        let lambda = 10f64.powf(rng.random_range(-4.0..0.0));
        let constraint = if rng.random_bool(0.5) { Constraint::UpperBound } else { Constraint::LowerBound };
        let cfg = FitConfig::new(k, lambda).with_grid(PosteriorGrid::from_kind(grid)).with_constraint(constraint);
        let w = fit(&g, &cfg, None).unwrap();
        worst_slack = worst_slack.min(w.min_constraint_slack.unwrap());
        worst_kkt = worst_kkt.max(w.kkt_residual);
    }
    outcome(
        worst_slack >= -1e-9 && worst_kkt <= 1e-7,
        format!("min slack {worst_slack:.2e} (>= -1e-9), max KKT residual {worst_kkt:.2e} (<= 1e-7)"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = rng_from_seed(9);
    let methods = [Method::Bernstein, Method::ConvexUniform, Method::ConvexDensity];
    let mut worst = 0.0f64;
    for i in 0..100 {
        let e = rng.random_range(1..=3);
        let (g, grid) = random_map(&mut rng);
        let k = rng.random_range(2..=20);
        let lambda = 10f64.powf(rng.random_range(-4.0..0.0));
        let method = methods[rng.random_range(0..methods.len())];
        let weighting = if method == Method::ConvexDensity { Weighting::Density } else { Weighting::Uniform };
        let cfg = FitConfig::new(k, lambda).with_grid(PosteriorGrid::from_kind(grid)).with_weighting(weighting);
        let ds = make_experiment_dataset(e, rng.random_range(50..300), 3, i).unwrap();
        let rho = rho_stats(&ds, k, NeighborSearch::KdTree).unwrap();
        let pair = Experiment::from_id(e).unwrap().class_pair(3).unwrap();
        let star = asymptotic_rho(&pair, k, 10_000, i).unwrap().values;
        let truth = rng.random_range(0.0..1.0);
        let w = basis_weights_for(&g, &cfg, method, &rho).unwrap();
        let d = error_decomposition(&w, &rho, &star, truth).unwrap();
        worst = worst.max((d.total - d.approximation - d.estimation).abs());
    }
    outcome(worst <= 1e-12, format!("max |e_T - e_A - e_est| = {worst:.2e} (<= 1e-12)"))
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_dfe")).args(args).output().expect("dfe runs");
    assert!(out.status.success(), "dfe {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let data_s = data.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["generate", "--experiment", "2", "--n", "400", "--seed", "3"],
        vec![
            "estimate",
            "--experiment",
            "1",
            "--functional",
            "hellinger",
            "--method",
            "convex_uniform",
            "--k",
            "10",
            "--lambda",
            "0.01",
            "--n",
            "1000",
            "--seed",
            "7",
        ],
        vec!["estimate", "--experiment", "3", "--method", "convex_bound", "--n", "600", "--seed", "1"],
        vec![
            "experiment",
            "--experiment",
            "1",
            "--methods",
            "bernstein,convex_uniform,convex_density,parametric,mst_dp",
            "--functional",
            "dp",
            "--n",
            "200,400",
            "--trials",
            "5",
            "--truth-mc",
            "20000",
        ],
        vec!["bounds", "--fukunaga", "1", "--n", "300", "--trials", "5"],
        vec!["curves", "--k", "12"],
        vec!["oracle", "--experiment", "4", "--functional", "hellinger", "--mc", "100000"],
    ];
    let mut identical = 0;
    let mut differing = Vec::new();
    for args in &commands {
        let a = run_cli(args);
        let b = run_cli(args);
        if a == b && !a.is_empty() {
            identical += 1;
        } else {
            differing.push(args[0]);
        }
    }
    // Sweep outputs written to disk, and estimation from a saved file.
    run_cli(&["generate", "--experiment", "1", "--n", "300", "--seed", "5", "--output", data_s]);
    let from_file = ["estimate", "--input", data_s, "--functional", "dp", "--method", "mst_dp"];
    let same_file = run_cli(&from_file) == run_cli(&from_file);
    let sweep = |out: &str| {
        run_cli(&["experiment", "--n", "200", "--trials", "4", "--truth-mc", "20000", "--output", out]);
        let raw = std::fs::read(dir.path().join(out).join("raw.csv")).unwrap();
        let agg = std::fs::read(dir.path().join(out).join("aggregate.csv")).unwrap();
        (raw, agg)
    };
    let a = sweep(dir.path().join("a").to_str().unwrap());
    let b = sweep(dir.path().join("b").to_str().unwrap());
    let ok = differing.is_empty() && same_file && a == b;
    outcome(
        ok,
        format!(
            "{identical}/{} commands byte-identical on stdout{}; file input {}; raw/aggregate CSVs {}",
            commands.len(),
            if differing.is_empty() { String::new() } else { format!(" (differ: {})", differing.join(", ")) },
            if same_file { "identical" } else { "differ" },
            if a == b { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Fukunaga bound means at N=1000", criterion_1),
        ("Fukunaga true Bayes error", criterion_2),
        ("bound ordering at N=10000", criterion_3),
        ("D_p exactness", criterion_4),
        ("basis statistic convergence", criterion_5),
        ("reconstruction error in k", criterion_6),
        ("estimator consistency", criterion_7),
        ("bound constraint validity", criterion_8),
        ("error decomposition identity", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    // Panic messages are reported on the criterion's own line.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == (i + 1).to_string()) {
            continue;
        }
        let started = std::time::Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "[{}] {id}: {name}: {} ({:.1}s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            started.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
