//! `dfe`: command-line front end for the estimators, oracles and experiment
//! harness.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration, 4 I/O, 5 computation.

use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use direct_functionals::datasets::{fmt_f64, LabeledDataset, DEFAULT_EXPERIMENT_DIM};
use direct_functionals::error::Error;
use direct_functionals::estimators::{
    estimate_bc_bound, estimate_ber_upper_bound, estimate_dp_bound, estimate_functional, theoretical_bound_curves,
    Method, CURVES_HEADER, REPORT_HEADER,
};
use direct_functionals::functionals::{GridKind, MapFamily, PosteriorGrid, PosteriorMap};
use direct_functionals::harness::{
    run_bounds_experiment, run_divergence_experiment, DataSource, ExperimentConfig, ResultTable,
};
use direct_functionals::neighborhood::NeighborSearch;
use direct_functionals::optimize::{FitConfig, Weighting, DEFAULT_K, DEFAULT_LAMBDA};
use direct_functionals::oracles::{pair_truth, TruthKey, TruthManifest};

#[derive(Parser)]
#[command(name = "dfe", version, about = "Direct estimation of divergences and Bayes error bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a labeled dataset and write it as CSV.
    Generate(GenerateArgs),
    /// Estimate one functional on one dataset.
    Estimate(EstimateArgs),
    /// Run a divergence Monte Carlo sweep.
    Experiment(SweepArgs),
    /// Run a Bayes error bound sweep.
    Bounds(SweepArgs),
    /// Pointwise bound curves on the posterior grid.
    Curves(CurvesArgs),
    /// Ground truth of a functional, as a truth manifest row.
    Oracle(OracleArgs),
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// Synthetic experiment (1 to 4).
    #[arg(long, conflicts_with = "fukunaga")]
    experiment: Option<u32>,
    /// Fukunaga benchmark set (1 or 2).
    #[arg(long)]
    fukunaga: Option<u32>,
    /// Dimension of the synthetic experiments.
    #[arg(long, default_value_t = DEFAULT_EXPERIMENT_DIM)]
    dim: usize,
}

impl SourceArgs {
    fn source(&self) -> Result<DataSource, Error> {
        let cfg = ExperimentConfig {
            experiment: self.experiment,
            fukunaga: self.fukunaga,
            dim: self.dim,
            ..Default::default()
        };
        cfg.source()
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Total number of points (split evenly between classes).
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Read the dataset from CSV instead of sampling one.
    #[arg(long, conflicts_with_all = ["experiment", "fukunaga"])]
    input: Option<PathBuf>,
    #[arg(long, default_value = "hellinger")]
    functional: MapFamily,
    #[arg(long, default_value = "convex_uniform")]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value = "standard")]
    grid: GridKind,
    /// Total number of sampled points.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "kdtree")]
    search: NeighborSearch,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    source: OptSourceArgs,
    #[arg(long)]
    functional: Option<MapFamily>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    grid: Option<GridKind>,
    /// Comma-separated total sample sizes.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    truth_mc: Option<u64>,
    /// Output directory for raw.csv and aggregate.csv; aggregates go to
    /// standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct OptSourceArgs {
    #[arg(long, conflicts_with = "fukunaga")]
    experiment: Option<u32>,
    #[arg(long)]
    fukunaga: Option<u32>,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "hellinger")]
    functional: MapFamily,
    /// Monte Carlo draws when no closed form applies.
    #[arg(long, default_value_t = 1_000_000)]
    mc: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Truth manifest CSV to read from and update.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Io(String),
    Compute(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) => Failure::Io(msg),
            Error::InvalidParameter(_) | Error::Parse(_) => Failure::Config(msg),
            Error::Domain { .. } | Error::Singular(_) | Error::Infeasible(_) | Error::NotConverged { .. } => {
                Failure::Compute(msg)
            }
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let ds = a.source.source()?.dataset(a.n, a.seed)?;
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    emit(a.output.as_deref(), &buf)
}

fn estimate(a: EstimateArgs) -> Result<(), Failure> {
    let ds = match &a.input {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            LabeledDataset::read_csv(BufReader::new(f))?
        }
        None => a.source.source()?.dataset(a.n, a.seed)?,
    };
    let (p0, p1) = ds.priors();
    let cfg = FitConfig::new(a.k, a.lambda).with_grid(PosteriorGrid::from_kind(a.grid));
    let report = match a.method {
        Method::BcBound => estimate_bc_bound(&ds)?,
        Method::DpBound => estimate_dp_bound(&ds)?,
        Method::ConvexBound => estimate_ber_upper_bound(&ds, &cfg, a.search)?,
        m => {
            let cfg = if m == Method::ConvexDensity { cfg.with_weighting(Weighting::Density) } else { cfg };
            let g = PosteriorMap::from_family(a.functional, p0, p1)?;
            estimate_functional(&ds, &g, &cfg, m, a.search)?
        }
    };
    let report = if a.input.is_none() { report.with_seed(a.seed) } else { report };
    let text = format!("{REPORT_HEADER}\n{}\n", report.csv_row());
    emit(a.output.as_deref(), text.as_bytes())
}

fn sweep_config(a: &SweepArgs, bounds: bool) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Failure::Io(format!("{}: {io}", p.display())),
            other => Failure::Config(other.to_string()),
        })?,
        None => ExperimentConfig::default(),
    };
    if bounds && a.config.is_none() {
        cfg.functional = MapFamily::Ber;
        cfg.methods = vec![Method::BcBound, Method::DpBound, Method::ConvexBound];
    }
    if a.source.experiment.is_some() || a.source.fukunaga.is_some() {
        cfg.experiment = a.source.experiment;
        cfg.fukunaga = a.source.fukunaga;
    }
    if let Some(d) = a.source.dim {
        cfg.dim = d;
    }
    if let Some(f) = a.functional {
        cfg.functional = f;
    }
    if let Some(m) = &a.methods {
        cfg.methods = m.clone();
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(g) = a.grid {
        cfg.grid = g;
    }
    if let Some(n) = &a.n {
        cfg.n_values = n.clone();
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed_base {
        cfg.seed_base = s;
    }
    if let Some(m) = a.truth_mc {
        cfg.truth_mc_samples = m;
    }
    if a.output.is_some() {
        cfg.output = a.output.clone();
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn write_table(table: &ResultTable, output: Option<&Path>) -> Result<(), Failure> {
    for f in table.failures() {
        eprintln!(
            "warning: {} N={} trial={} failed: {}",
            f.method,
            f.n,
            f.trial,
            f.failure.as_deref().unwrap_or_default()
        );
    }
    match output {
        Some(dir) => table.write_dir(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display()))),
        None => {
            let mut buf = Vec::new();
            table.write_aggregate_csv(&mut buf)?;
            emit(None, &buf)
        }
    }
}

fn experiment(a: SweepArgs) -> Result<(), Failure> {
    let cfg = sweep_config(&a, false)?;
    let table = run_divergence_experiment(&cfg)?;
    write_table(&table, cfg.output.as_deref())
}

fn bounds(a: SweepArgs) -> Result<(), Failure> {
    let cfg = sweep_config(&a, true)?;
    let table = run_bounds_experiment(&cfg)?;
    write_table(&table, cfg.output.as_deref())?;
    if let Some(dir) = &cfg.output {
        let mut s = String::from("method,asymptote,true_ber\n");
        for (m, v) in &table.asymptotes {
            s.push_str(&format!("{m},{},{}\n", fmt_f64(*v), fmt_f64(table.truth.value)));
        }
        std::fs::write(dir.join("asymptotes.csv"), s).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn curves(a: CurvesArgs) -> Result<(), Failure> {
    let rows = theoretical_bound_curves(a.k, a.lambda)?;
    let mut s = format!("{CURVES_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.eta),
            fmt_f64(r.ber),
            fmt_f64(r.bc),
            fmt_f64(r.dp),
            fmt_f64(r.convex)
        ));
    }
    emit(a.output.as_deref(), s.as_bytes())
}

fn oracle(a: OracleArgs) -> Result<(), Failure> {
    let source = a.source.source()?;
    let key = TruthKey {
        experiment: source.label(),
        functional: a.functional.name().to_string(),
        mc_samples: a.mc,
        seed: a.seed,
    };
    let mut manifest = match &a.manifest {
        Some(p) => TruthManifest::load(p)?,
        None => TruthManifest::new(),
    };
    let pair = source.class_pair()?;
    manifest.get_or_compute(key.clone(), || pair_truth(&pair, a.functional, a.mc, a.seed))?;
    if let Some(p) = &a.manifest {
        manifest.save(p)?;
    }
    let mut single = TruthManifest::new();
    single.insert(key.clone(), *manifest.get(&key).expect("just computed"));
    let mut buf = Vec::new();
    single.write_csv(&mut buf)?;
    emit(None, &buf)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Estimate(a) => estimate(a),
        Command::Experiment(a) => experiment(a),
        Command::Bounds(a) => bounds(a),
        Command::Curves(a) => curves(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("dfe: configuration error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("dfe: i/o error: {m}");
            ExitCode::from(4)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("dfe: computation failed: {m}");
            ExitCode::from(5)
        }
    }
}
