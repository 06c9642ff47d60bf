//! End-to-end estimators: basis estimates, Bayes error bounds and baselines.
//!
//! A basis estimate is `sum_r w_r rho_r`, where `rho` comes from k-NN label
//! counts and the weights come from one of the fits in [`crate::optimize`].
//! The density-weighted fit derives its posterior density estimate from the
//! same `rho` vector that the weights are applied to.

pub mod baselines;
pub mod mst;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::basis::{bernstein_weights, BasisWeights, EndpointPolicy};
use crate::datasets::{fmt_f64, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::functionals::{MapFamily, PosteriorGrid, PosteriorMap};
use crate::neighborhood::{posterior_density_estimate, rho_stats, NeighborSearch, RhoVector};
use crate::optimize::{fit_bound, fit_density_weighted, fit_uniform, Constraint, FitConfig, Weighting};
use crate::oracles::{error_decomposition, ErrorDecomposition};

pub use baselines::{bhattacharyya_bounds, dp_bounds, fit_gaussian, parametric_plugin_value, BerBounds, GaussianFit};
pub use mst::{cross_edge_count, euclidean_mst, mst_dp_estimate};

/// Estimation method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bernstein,
    ConvexUniform,
    ConvexDensity,
    #[serde(alias = "parametric")]
    ParametricPlugin,
    MstDp,
    BcBound,
    DpBound,
    ConvexBound,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bernstein => "bernstein",
            Self::ConvexUniform => "convex_uniform",
            Self::ConvexDensity => "convex_density",
            Self::ParametricPlugin => "parametric_plugin",
            Self::MstDp => "mst_dp",
            Self::BcBound => "bc_bound",
            Self::DpBound => "dp_bound",
            Self::ConvexBound => "convex_bound",
        }
    }

    /// Methods that apply basis weights to `rho`.
    pub fn uses_basis(self) -> bool {
        matches!(self, Self::Bernstein | Self::ConvexUniform | Self::ConvexDensity | Self::ConvexBound)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bernstein" => Self::Bernstein,
            "convex_uniform" => Self::ConvexUniform,
            "convex_density" => Self::ConvexDensity,
            "parametric_plugin" | "parametric" => Self::ParametricPlugin,
            "mst_dp" => Self::MstDp,
            "bc_bound" | "bc" => Self::BcBound,
            "dp_bound" | "dp" => Self::DpBound,
            "convex_bound" | "convex" => Self::ConvexBound,
            other => return Err(invalid(format!("unknown method `{other}`"))),
        })
    }
}

/// One estimate with the configuration and diagnostics that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub method: Method,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub n: usize,
    pub seed: Option<u64>,
    /// Direction of a bound estimate.
    pub direction: Option<Constraint>,
    pub weights_norm: Option<f64>,
    pub min_constraint_slack: Option<f64>,
    pub rho: Option<Vec<f64>>,
    /// Degenerate cases handled along the way (rank deficiency, fallbacks,
    /// clamping, covariance regularization).
    pub flags: Vec<String>,
}

pub const REPORT_HEADER: &str = "method,value,k,lambda,N,seed,weights_norm,min_constraint_slack,flags";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EstimateReport {
    fn bare(value: f64, method: Method, n: usize) -> Self {
        Self {
            value,
            method,
            k: None,
            lambda: None,
            n,
            seed: None,
            direction: None,
            weights_norm: None,
            min_constraint_slack: None,
            rho: None,
            flags: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// The value with negative divergence estimates raised to zero.
    pub fn clamped(&self) -> f64 {
        self.value.max(0.0)
    }

    /// One CSV row matching [`REPORT_HEADER`].
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            self.method,
            fmt_f64(self.value),
            opt(self.k),
            opt(self.lambda.map(fmt_f64)),
            self.n,
            opt(self.seed),
            opt(self.weights_norm.map(fmt_f64)),
            opt(self.min_constraint_slack.map(fmt_f64)),
            self.flags.join(";")
        );
        s
    }
}

/// Weights for a basis method computed from a `rho` vector.
pub fn basis_weights_for(g: &PosteriorMap, cfg: &FitConfig, method: Method, rho: &RhoVector) -> Result<BasisWeights> {
    if rho.k() != cfg.k {
        return Err(invalid(format!("rho was computed with k = {} but the fit uses k = {}", rho.k(), cfg.k)));
    }
    match method {
        Method::Bernstein => {
            let policy = cfg.grid.epsilon().map_or(EndpointPolicy::Exact, EndpointPolicy::Clip);
            bernstein_weights(g, cfg.k, policy)
        }
        Method::ConvexUniform => fit_uniform(g, cfg),
        Method::ConvexDensity => fit_density_weighted(g, cfg, &posterior_density_estimate(rho)),
        Method::ConvexBound => {
            let c = if cfg.constraint == Constraint::None { Constraint::UpperBound } else { cfg.constraint };
            let bcfg = cfg.clone().with_constraint(c);
            let fhat = (bcfg.weighting == Weighting::Density).then(|| posterior_density_estimate(rho));
            fit_bound(g, &bcfg, fhat.as_ref())
        }
        other => Err(invalid(format!("`{other}` is not a basis method"))),
    }
}

/// Applies a basis method to precomputed statistics.
pub fn estimate_from_rho(g: &PosteriorMap, cfg: &FitConfig, method: Method, rho: &RhoVector) -> Result<EstimateReport> {
    let w = basis_weights_for(g, cfg, method, rho)?;
    let mut rep = EstimateReport::bare(w.apply(rho.values())?, method, rho.n());
    rep.k = Some(cfg.k);
    rep.lambda = Some(if method == Method::Bernstein { 0.0 } else { cfg.lambda });
    rep.weights_norm = Some(w.norm());
    rep.min_constraint_slack = w.min_constraint_slack;
    rep.rho = Some(rho.values().to_vec());
    if method == Method::ConvexBound {
        rep.direction = Some(if cfg.constraint == Constraint::LowerBound {
            Constraint::LowerBound
        } else {
            Constraint::UpperBound
        });
    }
    if w.rank_deficient {
        rep.flags.push("rank_deficient".into());
    }
    if w.fell_back_to_uniform {
        rep.flags.push("uniform_fallback".into());
    }
    Ok(rep)
}

/// Estimates `G = E[g(eta)]` from a labeled dataset.
///
/// Basis methods use `cfg`; `ParametricPlugin` and `MstDp` ignore it.
pub fn estimate_functional(
    ds: &LabeledDataset,
    g: &PosteriorMap,
    cfg: &FitConfig,
    method: Method,
    search: NeighborSearch,
) -> Result<EstimateReport> {
    match method {
        m if m.uses_basis() => {
            cfg.validate()?;
            let rho = rho_stats(ds, cfg.k, search)?;
            estimate_from_rho(g, cfg, m, &rho)
        }
        Method::ParametricPlugin => {
            let pv = parametric_plugin_value(ds, g.family())?;
            let mut rep = EstimateReport::bare(pv.value, method, ds.len());
            if pv.regularized {
                rep.flags.push("covariance_regularized".into());
            }
            Ok(rep)
        }
        Method::MstDp => {
            if g.family() != MapFamily::Dp {
                return Err(invalid("the MST estimator only targets the D_p divergence"));
            }
            Ok(EstimateReport::bare(mst_dp_estimate(ds)?, method, ds.len()))
        }
        other => Err(invalid(format!("`{other}` is a bound, not a functional estimate"))),
    }
}

/// Upper bound on the Bayes error from a constrained basis fit of
/// `min(eta, 1 - eta)`.
pub fn estimate_ber_upper_bound(
    ds: &LabeledDataset,
    cfg: &FitConfig,
    search: NeighborSearch,
) -> Result<EstimateReport> {
    let cfg = cfg.clone().with_constraint(Constraint::UpperBound);
    estimate_functional(ds, &PosteriorMap::ber(), &cfg, Method::ConvexBound, search)
}

/// Bhattacharyya upper bound from the Gaussian plug-in Hellinger distance.
pub fn estimate_bc_bound(ds: &LabeledDataset) -> Result<EstimateReport> {
    let pv = parametric_plugin_value(ds, MapFamily::HellingerSq)?;
    let b = bhattacharyya_bounds(pv.value)?;
    let mut rep = EstimateReport::bare(b.upper, Method::BcBound, ds.len());
    rep.direction = Some(Constraint::UpperBound);
    if pv.regularized {
        rep.flags.push("covariance_regularized".into());
    }
    if b.clamped {
        rep.flags.push("clamped".into());
    }
    Ok(rep)
}

/// `D_p` upper bound `1/2 - 1/2 D_p` from the MST estimate.
pub fn estimate_dp_bound(ds: &LabeledDataset) -> Result<EstimateReport> {
    let b = dp_bounds(mst_dp_estimate(ds)?)?;
    let mut rep = EstimateReport::bare(b.upper, Method::DpBound, ds.len());
    rep.direction = Some(Constraint::UpperBound);
    if b.clamped {
        rep.flags.push("clamped".into());
    }
    Ok(rep)
}

/// Error split of a basis estimate against a known truth and `rho*`.
pub fn decompose_error(
    ds: &LabeledDataset,
    g: &PosteriorMap,
    cfg: &FitConfig,
    method: Method,
    search: NeighborSearch,
    truth: f64,
    rho_star: &[f64],
) -> Result<ErrorDecomposition> {
    let rho = rho_stats(ds, cfg.k, search)?;
    let w = basis_weights_for(g, cfg, method, &rho)?;
    error_decomposition(&w, &rho, rho_star, truth)
}

/// One row of the pointwise bound curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCurvePoint {
    pub eta: f64,
    pub ber: f64,
    pub bc: f64,
    pub dp: f64,
    pub convex: f64,
}

pub const CURVES_HEADER: &str = "eta,ber,bc,dp,convex";

/// Pointwise integrands of the three Bayes error upper bounds on the
/// standard grid, for balanced classes.
///
/// `bc = sqrt(eta (1 - eta))`, `dp = 1/2 - 1/2 (2 eta - 1)^2` and `convex`
/// is the constrained basis fit of `min(eta, 1 - eta)`.
pub fn theoretical_bound_curves(k: usize, lambda: f64) -> Result<Vec<BoundCurvePoint>> {
    let cfg = FitConfig::new(k, lambda).with_constraint(Constraint::UpperBound);
    let w = fit_bound(&PosteriorMap::ber(), &cfg, None)?;
    let grid = PosteriorGrid::standard();
    grid.etas()
        .iter()
        .map(|&eta| {
            Ok(BoundCurvePoint {
                eta,
                ber: eta.min(1.0 - eta),
                bc: (eta * (1.0 - eta)).sqrt(),
                dp: 0.5 - 0.5 * (2.0 * eta - 1.0).powi(2),
                convex: w.reconstruct(eta)?,
            })
        })
        .collect()
}
