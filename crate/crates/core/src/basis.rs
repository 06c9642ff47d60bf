//! Bernstein basis polynomials `h_{r,k}(eta) = C(k, r) eta^r (1 - eta)^(k - r)`
//! and the fixed "Bernstein weights" `w_r = g(r / k)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functionals::PosteriorMap;

/// Largest degree for which binomial coefficients are formed exactly in `u64`.
const EXACT_BINOMIAL_MAX: usize = 60;

/// Degree of a Bernstein basis; the basis has `k + 1` elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    k: usize,
}

impl BasisSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("basis degree k must be at least 1"));
        }
        Ok(Self { k })
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Exact binomial coefficient for `k <= 60`.
pub(crate) fn binomial_exact(k: usize, r: usize) -> u64 {
    let r = r.min(k - r);
    let mut c: u64 = 1;
    for i in 0..r {
        // c * (k - i) is divisible by (i + 1); u128 avoids the intermediate overflow.
        c = ((c as u128 * (k - i) as u128) / (i as u128 + 1)) as u64;
    }
    c
}

fn ln_binomial(k: usize, r: usize) -> f64 {
    libm::lgamma(k as f64 + 1.0) - libm::lgamma(r as f64 + 1.0) - libm::lgamma((k - r) as f64 + 1.0)
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::Domain { what: "eta", value: eta, domain: "[0, 1]" })
    }
}

/// Evaluates `h_{r,k}(eta)`.
///
/// Degrees up to 60 use exact integer binomials; larger degrees work in log
/// space so that neither the coefficient nor the powers overflow.
pub fn bernstein_eval(r: usize, k: usize, eta: f64) -> Result<f64> {
    if r > k {
        return Err(invalid(format!("basis index r = {r} exceeds degree k = {k}")));
    }
    check_eta(eta)?;
    Ok(eval_unchecked(r, k, eta))
}

fn eval_unchecked(r: usize, k: usize, eta: f64) -> f64 {
    if eta == 0.0 {
        return if r == 0 { 1.0 } else { 0.0 };
    }
    if eta == 1.0 {
        return if r == k { 1.0 } else { 0.0 };
    }
    if k <= EXACT_BINOMIAL_MAX {
        binomial_exact(k, r) as f64 * eta.powi(r as i32) * (1.0 - eta).powi((k - r) as i32)
    } else {
        (ln_binomial(k, r) + r as f64 * eta.ln() + (k - r) as f64 * (-eta).ln_1p()).exp()
    }
}

/// All `k + 1` basis values at `eta`.
pub fn bernstein_row(k: usize, eta: f64) -> Result<Vec<f64>> {
    check_eta(eta)?;
    Ok((0..=k).map(|r| eval_unchecked(r, k, eta)).collect())
}

/// Design matrix with entry `(i, r) = h_{r,k}(etas[i])`.
pub fn basis_matrix(k: usize, etas: &[f64]) -> Result<DMatrix<f64>> {
    BasisSpec::new(k)?;
    if let Some(&bad) = etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::Domain { what: "eta", value: bad, domain: "[0, 1]" });
    }
    Ok(DMatrix::from_fn(etas.len(), k + 1, |i, r| eval_unchecked(r, k, etas[i])))
}

/// How a weight fit was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMethod {
    Bernstein,
    ConvexUniform,
    ConvexDensity,
    ConvexBound,
}

/// Coefficients `w_0..w_k` of a basis expansion plus fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisWeights {
    pub w: Vec<f64>,
    pub method: WeightMethod,
    pub lambda: f64,
    /// Objective value attained (zero for Bernstein weights).
    pub objective: f64,
    /// Largest violation of stationarity, feasibility or complementarity.
    pub kkt_residual: f64,
    /// Smallest `ghat - g` (upper bounds) or `g - ghat` (lower bounds) on
    /// the grid; `None` for unconstrained fits.
    pub min_constraint_slack: Option<f64>,
    /// Set when a `lambda = 0` solve was rank deficient and the minimum-norm
    /// solution was returned.
    pub rank_deficient: bool,
    /// Set when density weighting degenerated and the uniform fit was used.
    pub fell_back_to_uniform: bool,
}

impl BasisWeights {
    pub(crate) fn plain(w: Vec<f64>, method: WeightMethod, lambda: f64) -> Self {
        Self {
            w,
            method,
            lambda,
            objective: 0.0,
            kkt_residual: 0.0,
            min_constraint_slack: None,
            rank_deficient: false,
            fell_back_to_uniform: false,
        }
    }

    pub fn degree(&self) -> usize {
        self.w.len() - 1
    }

    /// `sum_r w_r h_{r,k}(eta)`.
    pub fn reconstruct(&self, eta: f64) -> Result<f64> {
        let row = bernstein_row(self.degree(), eta)?;
        Ok(row.iter().zip(&self.w).map(|(h, w)| h * w).sum())
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// `sum_r w_r rho_r`.
    pub fn apply(&self, rho: &[f64]) -> Result<f64> {
        if rho.len() != self.w.len() {
            return Err(invalid(format!("{} weights applied to {} basis statistics", self.w.len(), rho.len())));
        }
        Ok(self.w.iter().zip(rho).map(|(w, r)| w * r).sum())
    }
}

/// Treatment of `g` at `eta = 0` and `eta = 1` when forming Bernstein weights.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EndpointPolicy {
    /// Evaluate `g` exactly; fail if it is undefined there.
    #[default]
    Exact,
    /// Evaluate at `eps` and `1 - eps` instead of the endpoints.
    Clip(f64),
}

/// The weights `w_r = g(r / k)` of the classical Bernstein approximation.
pub fn bernstein_weights(g: &PosteriorMap, k: usize, endpoints: EndpointPolicy) -> Result<BasisWeights> {
    BasisSpec::new(k)?;
    let w = (0..=k)
        .map(|r| {
            let eta = match (endpoints, r) {
                (EndpointPolicy::Clip(eps), 0) => eps,
                (EndpointPolicy::Clip(eps), r) if r == k => 1.0 - eps,
                _ => r as f64 / k as f64,
            };
            g.eval(eta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BasisWeights::plain(w, WeightMethod::Bernstein, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{PosteriorGrid, PosteriorMap};
    use proptest::prelude::*;

    #[test]
    fn spot_values() {
        assert_eq!(bernstein_eval(0, 5, 0.0).unwrap(), 1.0);
        assert!((bernstein_eval(1, 3, 1.0 / 3.0).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        assert!((bernstein_eval(2, 4, 0.5).unwrap() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(bernstein_eval(4, 3, 0.5).is_err());
        assert!(bernstein_eval(1, 3, 1.5).is_err());
        assert!(bernstein_eval(1, 3, -0.1).is_err());
        assert!(basis_matrix(0, &[0.5]).is_err());
    }

    #[test]
    fn exact_binomials() {
        assert_eq!(binomial_exact(60, 30), 118_264_581_564_861_424);
        assert_eq!(binomial_exact(10, 3), 120);
        assert_eq!(binomial_exact(7, 0), 1);
    }

    #[test]
    fn small_matrix() {
        let m = basis_matrix(1, &[0.0, 0.5, 1.0]).unwrap();
        let want = [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]];
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(m[(i, j)], want[i][j]);
            }
        }
    }

    /// C(100, 50) / 2^100 from exact integer arithmetic via u128 halving.
    fn central_mass_oracle() -> f64 {
        // Multiply out C(100,50) * 2^-100 as a product of ratios in f64 with
        // exact small integers; each factor is (50 + i) / (4 i) for i = 1..=50.
        let mut v = 1.0f64;
        for i in 1..=50u32 {
            v *= (50 + i) as f64 / (4 * i) as f64;
        }
        v
    }

    #[test]
    fn high_degree_is_finite() {
        let m = basis_matrix(100, &[0.5]).unwrap();
        assert!(m.iter().all(|v| v.is_finite()));
        let max = m.iter().cloned().fold(0.0, f64::max);
        let oracle = central_mass_oracle();
        assert!((oracle - 0.079_589_237_387_178_77).abs() < 1e-12);
        assert!((max - oracle).abs() < 1e-12, "{max} vs {oracle}");
    }

    #[test]
    fn log_space_matches_exact_at_boundary() {
        for r in [0, 7, 30, 60] {
            for eta in [0.1, 0.5, 0.77] {
                let exact = eval_unchecked(r, 60, eta);
                let logspace =
                    (ln_binomial(60, r) + r as f64 * f64::ln(eta) + (60 - r) as f64 * f64::ln(1.0 - eta)).exp();
                assert!((exact - logspace).abs() <= 1e-12 * exact.max(1e-300) + 1e-300);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(k in 1usize..=200, eta in 0.0f64..=1.0) {
            let row = bernstein_row(k, eta).unwrap();
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn matrix_rows_sum_to_one() {
        let grid = PosteriorGrid::standard();
        for k in [1, 10, 57, 100] {
            let m = basis_matrix(k, grid.etas()).unwrap();
            for row in m.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_map_has_constant_weights() {
        let g = PosteriorMap::custom("const", |_| 0.7);
        let w = bernstein_weights(&g, 6, EndpointPolicy::Exact).unwrap();
        assert!(w.w.iter().all(|&v| v == 0.7));
        for eta in [0.0, 0.3, 1.0] {
            assert!((w.reconstruct(eta).unwrap() - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn finite_degree_counterexample() {
        let g = PosteriorMap::custom("h13", |e| 3.0 * e * (1.0 - e).powi(2));
        let w = bernstein_weights(&g, 3, EndpointPolicy::Exact).unwrap();
        let want = [0.0, 4.0 / 9.0, 2.0 / 9.0, 0.0];
        for (a, b) in w.w.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        // ghat = (4/3) eta (1-eta)^2 + (2/3) eta^2 (1-eta), which is not g.
        let eta = 0.25;
        let ghat = w.reconstruct(eta).unwrap();
        let closed = 4.0 / 3.0 * eta * (1.0 - eta) * (1.0 - eta) + 2.0 / 3.0 * eta * eta * (1.0 - eta);
        assert!((ghat - closed).abs() < 1e-15);
        assert!((ghat - g.eval(eta).unwrap()).abs() > 0.1);
    }

    #[test]
    fn dp_bernstein_weights_are_not_exact() {
        // g(r/k) at k = 2 is (1, 0, 1), reconstructing 1 - 2 eta + 2 eta^2. The
        // exact expansion of (2 eta - 1)^2 is (1, -1, 1); see the fitting tests.
        let g = PosteriorMap::dp(0.5).unwrap();
        let w = bernstein_weights(&g, 2, EndpointPolicy::Exact).unwrap();
        assert_eq!(w.w, vec![1.0, 0.0, 1.0]);
        let exact = BasisWeights::plain(vec![1.0, -1.0, 1.0], WeightMethod::Bernstein, 0.0);
        for i in 0..=20 {
            let eta = i as f64 / 20.0;
            assert!((exact.reconstruct(eta).unwrap() - g.eval(eta).unwrap()).abs() < 1e-14);
            let bern = 1.0 - 2.0 * eta + 2.0 * eta * eta;
            assert!((w.reconstruct(eta).unwrap() - bern).abs() < 1e-14);
        }
    }

    #[test]
    fn endpoint_interpolation() {
        let g = PosteriorMap::hellinger_sq(0.3, 0.7).unwrap();
        let w = bernstein_weights(&g, 9, EndpointPolicy::Exact).unwrap();
        assert!((w.reconstruct(0.0).unwrap() - g.eval(0.0).unwrap()).abs() < 1e-14);
        assert!((w.reconstruct(1.0).unwrap() - g.eval(1.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn kl_needs_clip_policy() {
        let g = PosteriorMap::kl01(0.5, 0.5).unwrap();
        assert!(bernstein_weights(&g, 10, EndpointPolicy::Exact).is_err());
        let w = bernstein_weights(&g, 10, EndpointPolicy::Clip(1e-4)).unwrap();
        assert!((w.w[0] - g.eval(1e-4).unwrap()).abs() < 1e-15);
        assert!((w.w[10] - g.eval(1.0 - 1e-4).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn weierstrass_convergence_for_hellinger() {
        let g = PosteriorMap::hellinger_sq(0.5, 0.5).unwrap();
        let grid = PosteriorGrid::standard();
        let max_err = |k| {
            let w = bernstein_weights(&g, k, EndpointPolicy::Exact).unwrap();
            grid.etas().iter().map(|&e| (w.reconstruct(e).unwrap() - g.eval(e).unwrap()).abs()).fold(0.0, f64::max)
        };
        let errs: Vec<f64> = [10, 40, 160].into_iter().map(max_err).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
