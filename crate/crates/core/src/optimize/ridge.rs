//! Ridge-regularized least squares through the SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Output of a ridge solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub w: Vec<f64>,
    /// `scale * sum_i omega_i (b_i - (A w)_i)^2 + lambda_term * |w|^2`.
    pub objective: f64,
    /// Numerical rank of the (weighted) design fell below its column count.
    pub rank_deficient: bool,
}

fn check_inputs(a: &DMatrix<f64>, b: &[f64], row_weights: Option<&[f64]>, scale: f64, lambda_term: f64) -> Result<()> {
    if a.nrows() != b.len() {
        return Err(invalid(format!("design has {} rows but target has {}", a.nrows(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(invalid("design and target must be finite"));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid(format!("data scale must be positive, got {scale}")));
    }
    if !(lambda_term.is_finite() && lambda_term >= 0.0) {
        return Err(invalid(format!("ridge term must be nonnegative, got {lambda_term}")));
    }
    if let Some(om) = row_weights {
        if om.len() != b.len() {
            return Err(invalid("row weight count does not match the target"));
        }
        if om.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("row weights must be finite and nonnegative"));
        }
    }
    Ok(())
}

/// Minimizes `scale * sum_i omega_i (b_i - (A w)_i)^2 + lambda_term * |w|^2`.
///
/// With `lambda_term = 0` and a rank-deficient design the minimum-norm
/// minimizer is returned and `rank_deficient` is set.
pub fn solve_ridge_weighted(
    a: &DMatrix<f64>,
    b: &[f64],
    row_weights: Option<&[f64]>,
    scale: f64,
    lambda_term: f64,
) -> Result<RidgeSolution> {
    check_inputs(a, b, row_weights, scale, lambda_term)?;
    let (m, n) = a.shape();
    let root: Vec<f64> = match row_weights {
        Some(om) => om.iter().map(|o| (scale * o).sqrt()).collect(),
        None => vec![scale.sqrt(); m],
    };
    let at = DMatrix::from_fn(m, n, |i, j| root[i] * a[(i, j)]);
    let bt = DVector::from_iterator(m, b.iter().zip(&root).map(|(v, r)| r * v));

    // Thin SVD needs at least as many rows as columns; pad with zero rows.
    let padded = m < n;
    let (at, bt) = if padded {
        let mut a2 = DMatrix::zeros(n, n);
        a2.rows_mut(0, m).copy_from(&at);
        let mut b2 = DVector::zeros(n);
        b2.rows_mut(0, m).copy_from(&bt);
        (a2, b2)
    } else {
        (at, bt)
    };

    let svd = at.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let tol = smax * f64::EPSILON * (m.max(n) as f64);
    let rank = s.iter().filter(|&&v| v > tol).count();

    let mut w = DVector::zeros(n);
    for (i, &si) in s.iter().enumerate() {
        let denom = si * si + lambda_term;
        if si <= tol && lambda_term == 0.0 {
            continue;
        }
        if denom == 0.0 {
            continue;
        }
        let coef = si * u.column(i).dot(&bt) / denom;
        w += coef * vt.row(i).transpose();
    }

    let resid = &at * &w - &bt;
    let objective = resid.norm_squared() + lambda_term * w.norm_squared();
    Ok(RidgeSolution { w: w.as_slice().to_vec(), objective, rank_deficient: rank < n })
}

/// Solves `(scale A^T A + lambda_term I) w = scale A^T b`.
///
/// A singular system (only possible with `lambda_term = 0`) is an error;
/// use [`solve_ridge_weighted`] for the minimum-norm fallback.
pub fn solve_ridge(a: &DMatrix<f64>, b: &[f64], scale: f64, lambda_term: f64) -> Result<Vec<f64>> {
    let sol = solve_ridge_weighted(a, b, None, scale, lambda_term)?;
    if sol.rank_deficient && lambda_term == 0.0 {
        return Err(Error::Singular(format!(
            "{}x{} design is rank deficient and no ridge term was given",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(sol.w)
}

/// Relative residual `|M w - r| / max(|r|, |M| |w|)` of the normal equations.
pub fn normal_equation_residual(
    a: &DMatrix<f64>,
    b: &[f64],
    row_weights: Option<&[f64]>,
    scale: f64,
    lambda_term: f64,
    w: &[f64],
) -> f64 {
    let n = a.ncols();
    let om = |i: usize| row_weights.map_or(1.0, |o| o[i]);
    let mut lhs = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for i in 0..a.nrows() {
        let wi = scale * om(i);
        for p in 0..n {
            rhs[p] += wi * a[(i, p)] * b[i];
            for q in 0..n {
                lhs[(p, q)] += wi * a[(i, p)] * a[(i, q)];
            }
        }
    }
    for p in 0..n {
        lhs[(p, p)] += lambda_term;
    }
    let wv = DVector::from_column_slice(w);
    let r = &lhs * &wv - &rhs;
    let denom = rhs.norm().max(lhs.norm() * wv.norm()).max(f64::MIN_POSITIVE);
    r.norm() / denom
}
