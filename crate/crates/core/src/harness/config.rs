use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{
    fukunaga_pair, make_experiment_dataset, make_fukunaga_dataset, Experiment, LabeledDataset, DEFAULT_EXPERIMENT_DIM,
};
use crate::distribution::ClassPair;
use crate::error::{invalid, Error, Result};
use crate::estimators::Method;
use crate::functionals::{GridKind, MapFamily, PosteriorGrid};
use crate::neighborhood::NeighborSearch;
use crate::optimize::{FitConfig, Weighting, DEFAULT_K, DEFAULT_LAMBDA};

pub const DEFAULT_N_VALUES: [usize; 7] = [100, 200, 500, 1000, 2000, 5000, 10_000];
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_TRUTH_MC_SAMPLES: u64 = 1_000_000;

/// Generative model behind an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic { experiment: Experiment, dim: usize },
    Fukunaga(u32),
}

impl DataSource {
    pub fn label(&self) -> String {
        match self {
            Self::Synthetic { experiment, dim } => format!("exp{}_d{dim}", experiment.id()),
            Self::Fukunaga(id) => format!("fukunaga{id}"),
        }
    }

    pub fn class_pair(&self) -> Result<ClassPair> {
        match *self {
            Self::Synthetic { experiment, dim } => experiment.class_pair(dim),
            Self::Fukunaga(id) => fukunaga_pair(id),
        }
    }

    /// A balanced dataset of `n` points in total.
    pub fn dataset(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        match *self {
            Self::Synthetic { experiment, dim } => make_experiment_dataset(experiment.id(), n / 2, dim, seed),
            Self::Fukunaga(id) => make_fukunaga_dataset(id, n, seed),
        }
    }
}

/// Monte Carlo sweep configuration, read from JSON.
///
/// Exactly one of `experiment` (1 to 4) and `fukunaga` (1 or 2) must be set.
/// Sample sizes in `n_values` count both classes together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<u32>,
    pub fukunaga: Option<u32>,
    pub dim: usize,
    pub functional: MapFamily,
    pub methods: Vec<Method>,
    pub k: usize,
    pub lambda: f64,
    pub grid: GridKind,
    pub weighting: Weighting,
    pub search: NeighborSearch,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub seed_base: u64,
    pub truth_mc_samples: u64,
    pub truth_seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Some(1),
            fukunaga: None,
            dim: DEFAULT_EXPERIMENT_DIM,
            functional: MapFamily::HellingerSq,
            methods: vec![Method::ConvexUniform],
            k: DEFAULT_K,
            lambda: DEFAULT_LAMBDA,
            grid: GridKind::Standard,
            weighting: Weighting::Uniform,
            search: NeighborSearch::KdTree,
            n_values: DEFAULT_N_VALUES.to_vec(),
            trials: DEFAULT_TRIALS,
            seed_base: 0,
            truth_mc_samples: DEFAULT_TRUTH_MC_SAMPLES,
            truth_seed: 0,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn source(&self) -> Result<DataSource> {
        match (self.experiment, self.fukunaga) {
            (Some(e), None) => Ok(DataSource::Synthetic { experiment: Experiment::from_id(e)?, dim: self.dim }),
            (None, Some(f)) => {
                fukunaga_pair(f)?;
                Ok(DataSource::Fukunaga(f))
            }
            _ => Err(invalid("set exactly one of `experiment` and `fukunaga`")),
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig::new(self.k, self.lambda)
            .with_grid(PosteriorGrid::from_kind(self.grid))
            .with_weighting(self.weighting)
    }

    pub fn validate(&self) -> Result<()> {
        self.source()?;
        if self.dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if u64::try_from(self.trials).map_or(true, |t| t >= 1 << 32) {
            return Err(invalid("trials must be below 2^32"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods list is empty"));
        }
        if self.n_values.is_empty() {
            return Err(invalid("n_values is empty"));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n <= self.k || n < 4) {
            return Err(invalid(format!("sample size {n} must exceed k = {} (and be at least 4)", self.k)));
        }
        self.fit_config().validate()
    }
}
