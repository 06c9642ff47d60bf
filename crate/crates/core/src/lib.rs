//! Direct estimation of divergence functionals and Bayes error bounds from
//! k-nearest-neighbor class counts.
//!
//! A functional of the form `E[g(eta(X))]` is estimated as `w . rho`, where
//! `rho` is the histogram of class-1 counts in k-NN neighborhoods and `w`
//! is fitted so that the Bernstein expansion `sum_r w_r B_{r,k}` tracks `g`.
//!
//! ```
//! use direct_functionals::prelude::*;
//!
//! let ds = make_experiment_dataset(1, 400, 3, 0).unwrap();
//! let g = PosteriorMap::dp(0.5).unwrap();
//! let est = estimate_functional(&ds, &g, &FitConfig::default(), Method::ConvexUniform, NeighborSearch::KdTree).unwrap();
//! assert!(est.value.is_finite());
//! ```

pub mod basis;
pub mod datasets;
pub mod distribution;
pub mod error;
pub mod estimators;
pub mod functionals;
pub mod harness;
mod kdtree;
pub mod neighborhood;
pub mod optimize;
pub mod oracles;

pub use error::{Error, Result};

/// The types most programs need.
pub mod prelude {
    pub use crate::basis::{BasisWeights, EndpointPolicy};
    pub use crate::datasets::{make_experiment_dataset, make_fukunaga_dataset, Experiment, LabeledDataset, Points};
    pub use crate::error::{Error, Result};
    pub use crate::estimators::{
        estimate_bc_bound, estimate_ber_upper_bound, estimate_dp_bound, estimate_functional, EstimateReport, Method,
    };
    pub use crate::functionals::{MapFamily, PosteriorGrid, PosteriorMap};
    pub use crate::harness::{run_bounds_experiment, run_divergence_experiment, ExperimentConfig};
    pub use crate::neighborhood::{rho_stats, NeighborSearch, RhoVector};
    pub use crate::optimize::{fit, Constraint, FitConfig, Weighting};
    pub use crate::oracles::{pair_truth, GroundTruth};
}

// The guide's snippets are compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/mapping-functions.md")]
    struct MappingFunctions;
    #[doc = include_str!("../../../book/src/neighborhood.md")]
    struct Neighborhood;
    #[doc = include_str!("../../../book/src/bernstein.md")]
    struct Bernstein;
    #[doc = include_str!("../../../book/src/fitting.md")]
    struct Fitting;
    #[doc = include_str!("../../../book/src/bounds.md")]
    struct Bounds;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
