//! Fitting basis weights to a posterior mapping function on a grid.
//!
//! All fits minimize a penalized squared reconstruction error
//!
//! ```text
//! sum_i omega_i (g(eta_i) - sum_r w_r h_{r,k}(eta_i))^2 + (lambda / k) |w|^2
//! ```
//!
//! with `omega_i = 1 / N_grid` (uniform) or `omega_i = fhat(eta_i) Delta_i`
//! (density weighted). Bound fits add the constraint that the reconstruction
//! stays on one side of `g` at every grid point.

pub mod qp;
pub mod ridge;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{basis_matrix, BasisSpec, BasisWeights, WeightMethod};
use crate::error::{invalid, Error, Result};
use crate::functionals::{PosteriorGrid, PosteriorMap};
use crate::neighborhood::{interp_density, PosteriorDensityEstimate};

pub use qp::{kkt_report, solve_constrained_qp, KktReport, QpSolution};
pub use ridge::{normal_equation_residual, solve_ridge, solve_ridge_weighted, RidgeSolution};

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    #[default]
    None,
    /// `ghat >= g` on the grid.
    UpperBound,
    /// `ghat <= g` on the grid.
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub lambda: f64,
    pub grid: PosteriorGrid,
    pub weighting: Weighting,
    pub constraint: Constraint,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            lambda: DEFAULT_LAMBDA,
            grid: PosteriorGrid::standard(),
            weighting: Weighting::Uniform,
            constraint: Constraint::None,
        }
    }
}

impl FitConfig {
    pub fn new(k: usize, lambda: f64) -> Self {
        Self { k, lambda, ..Self::default() }
    }

    pub fn with_grid(mut self, grid: PosteriorGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn validate(&self) -> Result<()> {
        BasisSpec::new(self.k)?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.grid.len() < self.k + 1 {
            return Err(invalid(format!("grid of {} points cannot determine {} weights", self.grid.len(), self.k + 1)));
        }
        Ok(())
    }

    /// Coefficient of `|w|^2` in the objective.
    pub fn ridge_term(&self) -> f64 {
        self.lambda / self.k as f64
    }
}

struct Problem {
    a: DMatrix<f64>,
    b: Vec<f64>,
}

fn problem(g: &PosteriorMap, cfg: &FitConfig) -> Result<Problem> {
    cfg.validate()?;
    Ok(Problem { a: basis_matrix(cfg.k, cfg.grid.etas())?, b: g.eval_grid(&cfg.grid)? })
}

/// `fhat(eta_i) Delta_i` on the grid.
pub fn density_row_weights(grid: &PosteriorGrid, fhat: &PosteriorDensityEstimate) -> Result<Vec<f64>> {
    let f = interp_density(fhat, grid.etas())?;
    Ok(f.iter().zip(grid.spacings()).map(|(f, d)| f * d).collect())
}

fn ridge_fit(
    pr: &Problem,
    cfg: &FitConfig,
    row_weights: Option<&[f64]>,
    scale: f64,
    method: WeightMethod,
) -> Result<BasisWeights> {
    let lt = cfg.ridge_term();
    let sol = solve_ridge_weighted(&pr.a, &pr.b, row_weights, scale, lt)?;
    let mut out = BasisWeights::plain(sol.w, method, cfg.lambda);
    out.objective = sol.objective;
    out.rank_deficient = sol.rank_deficient;
    out.kkt_residual = normal_equation_residual(&pr.a, &pr.b, row_weights, scale, lt, &out.w);
    Ok(out)
}

/// Ridge fit with equal weight `1 / N_grid` on every grid point.
pub fn fit_uniform(g: &PosteriorMap, cfg: &FitConfig) -> Result<BasisWeights> {
    let pr = problem(g, cfg)?;
    ridge_fit(&pr, cfg, None, 1.0 / cfg.grid.len() as f64, WeightMethod::ConvexUniform)
}

/// Ridge fit weighting grid point `i` by `fhat(eta_i) Delta_i`.
///
/// If every weight vanishes the uniform fit is returned with
/// `fell_back_to_uniform` set.
pub fn fit_density_weighted(
    g: &PosteriorMap,
    cfg: &FitConfig,
    fhat: &PosteriorDensityEstimate,
) -> Result<BasisWeights> {
    let pr = problem(g, cfg)?;
    let omega = density_row_weights(&cfg.grid, fhat)?;
    if omega.iter().all(|&o| o == 0.0) {
        let mut out = ridge_fit(&pr, cfg, None, 1.0 / cfg.grid.len() as f64, WeightMethod::ConvexDensity)?;
        out.fell_back_to_uniform = true;
        return Ok(out);
    }
    ridge_fit(&pr, cfg, Some(&omega), 1.0, WeightMethod::ConvexDensity)
}

/// Constrained fit keeping the reconstruction above (or below) `g` on the grid.
///
/// The objective follows `cfg.weighting`; density weighting needs `fhat`.
pub fn fit_bound(g: &PosteriorMap, cfg: &FitConfig, fhat: Option<&PosteriorDensityEstimate>) -> Result<BasisWeights> {
    let sign = match cfg.constraint {
        Constraint::UpperBound => 1.0,
        Constraint::LowerBound => -1.0,
        Constraint::None => return Err(invalid("bound fit requires an upper_bound or lower_bound constraint")),
    };
    let pr = problem(g, cfg)?;
    let m = pr.a.nrows();
    let n = pr.a.ncols();
    let omega: Vec<f64> = match cfg.weighting {
        Weighting::Uniform => vec![1.0 / m as f64; m],
        Weighting::Density => {
            let fhat = fhat.ok_or_else(|| invalid("density-weighted bound fit needs a density estimate"))?;
            let om = density_row_weights(&cfg.grid, fhat)?;
            if om.iter().all(|&o| o == 0.0) {
                vec![1.0 / m as f64; m]
            } else {
                om
            }
        }
    };
    let lt = cfg.ridge_term();

    // Objective sum_i omega_i (b - Aw)_i^2 + lt |w|^2 as ½ wᵀPw + qᵀw + const.
    let wa = DMatrix::from_fn(m, n, |i, j| omega[i] * pr.a[(i, j)]);
    let mut p = 2.0 * pr.a.transpose() * &wa;
    for i in 0..n {
        p[(i, i)] += 2.0 * lt;
    }
    p = 0.5 * (&p + p.transpose());
    let bv = DVector::from_column_slice(&pr.b);
    let q = -2.0 * wa.transpose() * &bv;

    // Upper: -A w <= -b. Lower: A w <= b.
    let gmat = -sign * &pr.a;
    let h: Vec<f64> = pr.b.iter().map(|v| -sign * v).collect();
    let sol = solve_constrained_qp(&p, q.as_slice(), &gmat, &h).map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!("{msg}; use lambda > 0 for this basis and grid")),
        other => other,
    })?;

    let w = DVector::from_column_slice(&sol.x);
    let ghat = &pr.a * &w;
    let resid = &bv - &ghat;
    let objective = resid.iter().zip(&omega).map(|(r, o)| o * r * r).sum::<f64>() + lt * w.norm_squared();
    let slack = ghat.iter().zip(&pr.b).map(|(gh, gv)| sign * (gh - gv)).fold(f64::INFINITY, f64::min);

    let mut out = BasisWeights::plain(sol.x, WeightMethod::ConvexBound, cfg.lambda);
    out.objective = objective;
    out.kkt_residual = sol.kkt.max();
    out.min_constraint_slack = Some(slack);
    Ok(out)
}

/// Dispatches on `cfg.constraint` and `cfg.weighting`.
pub fn fit(g: &PosteriorMap, cfg: &FitConfig, fhat: Option<&PosteriorDensityEstimate>) -> Result<BasisWeights> {
    match (cfg.constraint, cfg.weighting) {
        (Constraint::None, Weighting::Uniform) => fit_uniform(g, cfg),
        (Constraint::None, Weighting::Density) => {
            let fhat = fhat.ok_or_else(|| invalid("density weighting needs a density estimate"))?;
            fit_density_weighted(g, cfg, fhat)
        }
        _ => fit_bound(g, cfg, fhat),
    }
}

/// Mean squared reconstruction error `1/N_grid sum_i (g - ghat)^2` on `grid`.
pub fn reconstruction_mse(weights: &BasisWeights, g: &PosteriorMap, grid: &PosteriorGrid) -> Result<f64> {
    let a = basis_matrix(weights.degree(), grid.etas())?;
    let ghat = a * DVector::from_column_slice(&weights.w);
    let b = g.eval_grid(grid)?;
    Ok(ghat.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / grid.len() as f64)
}

/// Largest `|g - ghat|` on `grid`.
pub fn max_reconstruction_error(weights: &BasisWeights, g: &PosteriorMap, grid: &PosteriorGrid) -> Result<f64> {
    let a = basis_matrix(weights.degree(), grid.etas())?;
    let ghat = a * DVector::from_column_slice(&weights.w);
    let b = g.eval_grid(grid)?;
    Ok(ghat.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{bernstein_eval, bernstein_weights, EndpointPolicy};
    use crate::datasets::rng_from_seed;
    use crate::functionals::PosteriorMap;
    use rand::Rng;

    fn hellinger() -> PosteriorMap {
        PosteriorMap::hellinger_sq(0.5, 0.5).unwrap()
    }

    #[test]
    fn single_basis_function_is_recovered() {
        let g = PosteriorMap::custom("beta13", |e| bernstein_eval(1, 3, e).unwrap());
        let w = fit_uniform(&g, &FitConfig::new(3, 0.0)).unwrap();
        let want = [0.0, 1.0, 0.0, 0.0];
        for (x, y) in w.w.iter().zip(want) {
            assert!((x - y).abs() < 1e-12, "{:?}", w.w);
        }
        assert!(w.objective < 1e-24);
        assert!(!w.rank_deficient);
    }

    #[test]
    fn dp_is_represented_exactly() {
        let g = PosteriorMap::dp(0.5).unwrap();
        for k in [2, 5, 10] {
            let cfg = FitConfig::new(k, 0.0);
            let w = fit_uniform(&g, &cfg).unwrap();
            assert!(max_reconstruction_error(&w, &g, &cfg.grid).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn zero_target_gives_zero_weights() {
        let g = PosteriorMap::custom("zero", |_| 0.0);
        for lambda in [0.0, 0.01, 5.0] {
            let cfg = FitConfig::new(7, lambda);
            assert!(fit_uniform(&g, &cfg).unwrap().w.iter().all(|v| *v == 0.0));
            let up = fit_bound(&g, &cfg.clone().with_constraint(Constraint::UpperBound), None).unwrap();
            assert!(up.w.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn constant_density_matches_uniform_without_ridge() {
        let g = hellinger();
        let cfg = FitConfig::new(8, 0.0);
        let fhat = PosteriorDensityEstimate::from_values(vec![1.0; 11]).unwrap();
        let a = fit_uniform(&g, &cfg).unwrap();
        let b = fit_density_weighted(&g, &cfg, &fhat).unwrap();
        for (x, y) in a.w.iter().zip(&b.w) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn concentrated_density_pins_the_midpoint() {
        let g = hellinger();
        let cfg = FitConfig::new(4, 1e-6);
        let mut vals = vec![0.0; 101];
        vals[50] = 1.0;
        let fhat = PosteriorDensityEstimate::from_values(vals).unwrap();
        let w = fit_density_weighted(&g, &cfg, &fhat).unwrap();
        // Only the residual at 0.5 carries weight; minimizing
        // 0.01 (g - a.w)^2 + lt |w|^2 gives a.w = 0.01 g / (0.01 + lt / |a|^2).
        let a = crate::basis::bernstein_row(4, 0.5).unwrap();
        let a2: f64 = a.iter().map(|v| v * v).sum();
        let lt = 1e-6 / 4.0;
        let want = g.eval(0.5).unwrap() * 0.01 / (0.01 + lt / a2);
        assert!((w.reconstruct(0.5).unwrap() - want).abs() < 1e-12);
        assert!((w.reconstruct(0.5).unwrap() - g.eval(0.5).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn zero_density_falls_back() {
        let fhat = PosteriorDensityEstimate::from_values(vec![0.0; 5]).unwrap();
        let w = fit_density_weighted(&hellinger(), &FitConfig::default(), &fhat).unwrap();
        assert!(w.fell_back_to_uniform);
        let u = fit_uniform(&hellinger(), &FitConfig::default()).unwrap();
        assert_eq!(w.w, u.w);
    }

    #[test]
    fn dp_density_weighting_has_no_effect() {
        let g = PosteriorMap::dp(0.5).unwrap();
        let cfg = FitConfig::new(10, 0.0);
        let mut rng = rng_from_seed(4);
        let fhat =
            PosteriorDensityEstimate::from_values((0..=10).map(|_| rng.random_range(0.0..3.0)).collect()).unwrap();
        let a = fit_uniform(&g, &cfg).unwrap();
        let b = fit_density_weighted(&g, &cfg, &fhat).unwrap();
        for (x, y) in a.w.iter().zip(&b.w) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn ber_upper_bound_is_valid_and_tight() {
        let cfg = FitConfig::default().with_constraint(Constraint::UpperBound);
        let w = fit_bound(&PosteriorMap::ber(), &cfg, None).unwrap();
        assert!(w.min_constraint_slack.unwrap() >= -1e-9);
        assert!(w.kkt_residual <= 1e-7);
        for &eta in cfg.grid.etas() {
            let ghat = w.reconstruct(eta).unwrap();
            let dp_curve = 0.5 - 0.5 * (2.0 * eta - 1.0).powi(2);
            assert!(ghat >= eta.min(1.0 - eta) - 1e-9);
            assert!(ghat <= dp_curve + 1e-9, "eta {eta}: {ghat} > {dp_curve}");
        }
        assert!(w.reconstruct(0.5).unwrap() < 0.5 * 1.30);
    }

    #[test]
    fn ber_lower_bound_mirrors() {
        let cfg = FitConfig::default().with_constraint(Constraint::LowerBound);
        let w = fit_bound(&PosteriorMap::ber(), &cfg, None).unwrap();
        for &eta in cfg.grid.etas() {
            assert!(w.reconstruct(eta).unwrap() <= eta.min(1.0 - eta) + 1e-9);
        }
        assert!(fit_bound(&PosteriorMap::ber(), &FitConfig::default(), None).is_err());
    }

    #[test]
    fn bound_kkt_has_active_set_and_complementarity() {
        let cfg = FitConfig::default().with_constraint(Constraint::UpperBound);
        let pr = problem(&PosteriorMap::ber(), &cfg).unwrap();
        let m = pr.a.nrows();
        let n = pr.a.ncols();
        let s = 1.0 / m as f64;
        let lt = cfg.ridge_term();
        let p = 2.0 * s * pr.a.transpose() * &pr.a + DMatrix::identity(n, n) * (2.0 * lt);
        let p = 0.5 * (&p + p.transpose());
        let q = -2.0 * s * pr.a.transpose() * DVector::from_column_slice(&pr.b);
        let h: Vec<f64> = pr.b.iter().map(|v| -v).collect();
        let sol = solve_constrained_qp(&p, q.as_slice(), &(-&pr.a), &h).unwrap();
        assert!(!sol.active.is_empty());
        let ghat = &pr.a * DVector::from_column_slice(&sol.x);
        for i in 0..m {
            let slack = ghat[i] - pr.b[i];
            assert!((sol.duals[i] * slack).abs() <= 1e-8);
        }
        assert!(sol.kkt.max() <= 1e-7);
    }

    #[test]
    fn convex_fit_beats_bernstein_weights() {
        let g = hellinger();
        for k in [5, 20, 50] {
            let cfg = FitConfig::new(k, 0.0);
            let convex = fit_uniform(&g, &cfg).unwrap();
            let bern = bernstein_weights(&g, k, EndpointPolicy::Exact).unwrap();
            let a = reconstruction_mse(&convex, &g, &cfg.grid).unwrap();
            let b = reconstruction_mse(&bern, &g, &cfg.grid).unwrap();
            assert!(a <= b, "k={k}: {a} > {b}");
        }
    }

    #[test]
    fn random_polynomials_fit_exactly() {
        let mut rng = rng_from_seed(21);
        for _ in 0..20 {
            let k = rng.random_range(1..=10);
            let deg = rng.random_range(0..=k);
            let coef: Vec<f64> = (0..=deg).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c2 = coef.clone();
            let g = PosteriorMap::custom("poly", move |e| c2.iter().rev().fold(0.0, |acc, c| acc * e + c));
            let cfg = FitConfig::new(k, 0.0);
            let w = fit_uniform(&g, &cfg).unwrap();
            assert!(max_reconstruction_error(&w, &g, &cfg.grid).unwrap() <= 1e-9, "k={k} deg={deg}");
        }
    }

    #[test]
    fn ridge_shrinks_weights() {
        let g = hellinger();
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 0.01, 1.0, 100.0] {
            let n = fit_uniform(&g, &FitConfig::new(12, lambda)).unwrap().norm();
            assert!(n <= prev * (1.0 + 1e-12));
            prev = n;
        }
    }

    #[test]
    fn uniform_fit_satisfies_normal_equations() {
        let w = fit_uniform(&hellinger(), &FitConfig::default()).unwrap();
        assert!(w.kkt_residual <= 1e-8);
    }

    #[test]
    fn config_validation() {
        let short = FitConfig::new(10, 0.01).with_grid(PosteriorGrid::uniform(5).unwrap());
        assert!(fit_uniform(&hellinger(), &short).is_err());
        assert!(fit_uniform(&hellinger(), &FitConfig::new(10, -1.0)).is_err());
        assert!(fit_uniform(&hellinger(), &FitConfig::new(0, 0.01)).is_err());
        let dens = FitConfig::default().with_weighting(Weighting::Density);
        assert!(fit(&hellinger(), &dens, None).is_err());
    }
}
