//! Monte Carlo experiment runner and CSV output.
//!
//! Every `(N, trial)` cell draws a fresh dataset from seed `seed_base +
//! trial`; all methods in the run see that same dataset. Cells run in
//! parallel, and rows are emitted in `(method, N, trial)` order whatever the
//! completion order, so reruns produce identical files.

mod config;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::fmt_f64;
use crate::error::{invalid, Result};
use crate::estimators::{estimate_bc_bound, estimate_dp_bound, estimate_from_rho, estimate_functional, Method};
use crate::functionals::{MapFamily, PosteriorMap};
use crate::neighborhood::rho_stats;
use crate::optimize::{fit_bound, Constraint, Weighting};
use crate::oracles::{asymptotic_rho, mc_integral_functional, pair_truth, GroundTruth};

pub use config::{DataSource, ExperimentConfig, DEFAULT_N_VALUES, DEFAULT_TRIALS, DEFAULT_TRUTH_MC_SAMPLES};

pub const RAW_HEADER: &str = "method,N,trial,seed,estimate,truth,error";
pub const BOUNDS_RAW_HEADER: &str = "method,N,trial,seed,estimate,truth,error,asymptote";
pub const AGGREGATE_HEADER: &str = "method,N,trials,mean,mse,std";

/// One `(method, N, trial)` cell. `estimate` is `None` when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub estimate: Option<f64>,
    pub truth: f64,
    /// `estimate - truth`.
    pub error: Option<f64>,
    pub failure: Option<String>,
}

/// Summary over the successful trials of one `(method, N)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub n: usize,
    pub trials: usize,
    pub mean: f64,
    /// Mean of `(truth - estimate)^2`.
    pub mse: f64,
    /// Sample standard deviation of the estimates.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub source: String,
    pub functional: MapFamily,
    pub truth: GroundTruth,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Population value of each bound (bounds experiments only).
    pub asymptotes: Vec<(Method, f64)>,
}

fn aggregate(rows: &[ResultRow], methods: &[Method], n_values: &[usize]) -> Vec<AggregateRow> {
    let mut out = Vec::with_capacity(methods.len() * n_values.len());
    for &m in methods {
        for &n in n_values {
            let cell: Vec<&ResultRow> = rows.iter().filter(|r| r.method == m && r.n == n).collect();
            let est: Vec<f64> = cell.iter().filter_map(|r| r.estimate).collect();
            let count = est.len();
            let (mean, mse, std) = if count == 0 {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let c = count as f64;
                let mean = est.iter().sum::<f64>() / c;
                let mse = cell.iter().filter_map(|r| r.error).map(|e| e * e).sum::<f64>() / c;
                let var = if count > 1 { est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (c - 1.0) } else { 0.0 };
                (mean, mse, var.sqrt())
            };
            out.push(AggregateRow { method: m, n, trials: count, mean, mse, std });
        }
    }
    out
}

fn order_rows(mut rows: Vec<ResultRow>, methods: &[Method]) -> Vec<ResultRow> {
    let rank = |m: Method| methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (rank(r.method), r.n, r.trial));
    rows
}

fn row(method: Method, n: usize, trial: usize, seed: u64, truth: f64, est: Result<f64>) -> ResultRow {
    match est {
        Ok(v) => ResultRow { method, n, trial, seed, estimate: Some(v), truth, error: Some(v - truth), failure: None },
        Err(e) => {
            ResultRow { method, n, trial, seed, estimate: None, truth, error: None, failure: Some(e.to_string()) }
        }
    }
}

fn cells(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    cfg.n_values.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect()
}

/// Divergence estimation sweep against the oracle truth.
pub fn run_divergence_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let source = cfg.source()?;
    let pair = source.class_pair()?;
    let truth = pair_truth(&pair, cfg.functional, cfg.truth_mc_samples, cfg.truth_seed)?;
    let g = PosteriorMap::from_family(cfg.functional, pair.p0, pair.p1())?;
    let fit = cfg.fit_config();
    let any_basis = cfg.methods.iter().any(|m| m.uses_basis());

    let rows: Vec<ResultRow> = cells(cfg)
        .into_par_iter()
        .flat_map_iter(|(n, trial)| {
            let seed = cfg.seed_base + trial as u64;
            let ds = source.dataset(n, seed);
            let rho = match (&ds, any_basis) {
                (Ok(ds), true) => Some(rho_stats(ds, fit.k, cfg.search)),
                _ => None,
            };
            cfg.methods
                .iter()
                .map(|&m| {
                    let est = match (&ds, &rho) {
                        (Err(e), _) => Err(invalid(e.to_string())),
                        (Ok(_), Some(Err(e))) if m.uses_basis() => Err(invalid(e.to_string())),
                        (Ok(_), Some(Ok(rho))) if m.uses_basis() => {
                            estimate_from_rho(&g, &fit, m, rho).map(|r| r.value)
                        }
                        (Ok(ds), _) => estimate_functional(ds, &g, &fit, m, cfg.search).map(|r| r.value),
                    };
                    row(m, n, trial, seed, truth.value, est)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let rows = order_rows(rows, &cfg.methods);
    let aggregates = aggregate(&rows, &cfg.methods, &cfg.n_values);
    Ok(ResultTable {
        source: source.label(),
        functional: cfg.functional,
        truth,
        rows,
        aggregates,
        asymptotes: Vec::new(),
    })
}

/// Population values of the three Bayes error upper bounds.
fn bound_asymptotes(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<(Method, f64)>> {
    let pair = cfg.source()?.class_pair()?;
    let p0 = pair.p0;
    let m = cfg.truth_mc_samples;
    let seed = cfg.truth_seed;
    methods
        .iter()
        .map(|&method| {
            let v = match method {
                Method::BcBound => 0.5 * (1.0 - pair_truth(&pair, MapFamily::HellingerSq, m, seed)?.value),
                Method::DpBound => {
                    let u = mc_integral_functional(&pair, &PosteriorMap::dp(p0)?, m, seed)?.value;
                    0.5 - 0.5 * u
                }
                Method::ConvexBound => {
                    // Population density of eta is unknown here; use the uniform objective.
                    let fit =
                        cfg.fit_config().with_weighting(Weighting::Uniform).with_constraint(Constraint::UpperBound);
                    let rho_star = asymptotic_rho(&pair, fit.k, m, seed)?;
                    fit_bound(&PosteriorMap::ber(), &fit, None)?.apply(&rho_star.values)?
                }
                other => return Err(invalid(format!("`{other}` is not a Bayes error bound"))),
            };
            Ok((method, v))
        })
        .collect()
}

/// Bayes error bound sweep: `bc_bound`, `dp_bound` and `convex_bound`.
pub fn run_bounds_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    if let Some(m) = cfg.methods.iter().find(|m| !matches!(m, Method::BcBound | Method::DpBound | Method::ConvexBound))
    {
        return Err(invalid(format!("`{m}` is not a Bayes error bound")));
    }
    let source = cfg.source()?;
    let pair = source.class_pair()?;
    let truth = pair_truth(&pair, MapFamily::Ber, cfg.truth_mc_samples, cfg.truth_seed)?;
    let fit = cfg.fit_config().with_constraint(Constraint::UpperBound);
    let ber = PosteriorMap::ber();

    let rows: Vec<ResultRow> = cells(cfg)
        .into_par_iter()
        .flat_map_iter(|(n, trial)| {
            let seed = cfg.seed_base + trial as u64;
            let ds = source.dataset(n, seed);
            cfg.methods
                .iter()
                .map(|&m| {
                    let est = match &ds {
                        Err(e) => Err(invalid(e.to_string())),
                        Ok(ds) => match m {
                            Method::BcBound => estimate_bc_bound(ds).map(|r| r.value),
                            Method::DpBound => estimate_dp_bound(ds).map(|r| r.value),
                            _ => estimate_functional(ds, &ber, &fit, Method::ConvexBound, cfg.search).map(|r| r.value),
                        },
                    };
                    row(m, n, trial, seed, truth.value, est)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let rows = order_rows(rows, &cfg.methods);
    let aggregates = aggregate(&rows, &cfg.methods, &cfg.n_values);
    let asymptotes = bound_asymptotes(cfg, &cfg.methods)?;
    Ok(ResultTable { source: source.label(), functional: MapFamily::Ber, truth, rows, aggregates, asymptotes })
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl ResultTable {
    pub fn aggregate_for(&self, method: Method, n: usize) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.method == method && a.n == n)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.failure.is_some())
    }

    fn asymptote(&self, m: Method) -> Option<f64> {
        self.asymptotes.iter().find(|(x, _)| *x == m).map(|(_, v)| *v)
    }

    /// Raw rows; bounds tables carry an extra `asymptote` column.
    pub fn write_raw_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let bounds = !self.asymptotes.is_empty();
        writeln!(out, "{}", if bounds { BOUNDS_RAW_HEADER } else { RAW_HEADER })?;
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{},{}",
                r.method,
                r.n,
                r.trial,
                r.seed,
                opt_f64(r.estimate),
                fmt_f64(r.truth),
                opt_f64(r.error)
            )?;
            if bounds {
                write!(out, ",{}", opt_f64(self.asymptote(r.method)))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_aggregate_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{AGGREGATE_HEADER}")?;
        for a in &self.aggregates {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                a.method,
                a.n,
                a.trials,
                fmt_f64(a.mean),
                fmt_f64(a.mse),
                fmt_f64(a.std)
            )?;
        }
        Ok(())
    }

    /// `raw.csv` and `aggregate.csv` in `dir`, which is created if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut raw = Vec::new();
        self.write_raw_csv(&mut raw)?;
        std::fs::write(dir.join("raw.csv"), raw)?;
        let mut agg = Vec::new();
        self.write_aggregate_csv(&mut agg)?;
        std::fs::write(dir.join("aggregate.csv"), agg)?;
        Ok(())
    }
}
