//! Dense strictly convex quadratic programs with linear inequalities.
//!
//! `min ½ xᵀPx + qᵀx  s.t.  Gx ≤ h`, `P` positive definite.
//!
//! The solver is the dual active-set method of Goldfarb and Idnani. It starts
//! from the unconstrained minimizer and repeatedly adds the most violated
//! constraint, so it needs no feasible starting point and detects infeasible
//! systems on its own. Step directions are recomputed from a Cholesky
//! factor of `P` and a QR factorization of the active normals; the problems
//! handled here have at most a few hundred variables, so clarity wins over
//! rank-one updates. A final polishing solve of the equality-constrained KKT
//! system on the identified active set removes accumulated drift.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};

/// First-order optimality residuals, all in absolute terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    /// `‖Px + q + Gᵀμ‖∞`.
    pub stationarity: f64,
    /// `max(0, max_i (Gx − h)_i)`.
    pub primal: f64,
    /// `max(0, max_i −μ_i)`.
    pub dual: f64,
    /// `max_i |μ_i (h − Gx)_i|`.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers for `Gx ≤ h`, nonnegative.
    pub duals: Vec<f64>,
    /// Indices of constraints in the final active set, in insertion order.
    pub active: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt: KktReport,
}

/// KKT residuals of `(x, μ)` for the problem `(P, q, G, h)`.
pub fn kkt_report(p: &DMatrix<f64>, q: &[f64], g: &DMatrix<f64>, h: &[f64], x: &[f64], mu: &[f64]) -> KktReport {
    let xv = DVector::from_column_slice(x);
    let mv = DVector::from_column_slice(mu);
    let grad = p * &xv + DVector::from_column_slice(q) + g.transpose() * &mv;
    let gx = g * &xv;
    let mut rep = KktReport { stationarity: grad.amax(), ..Default::default() };
    for i in 0..h.len() {
        let slack = h[i] - gx[i];
        rep.primal = rep.primal.max(-slack);
        rep.dual = rep.dual.max(-mu[i]);
        rep.complementarity = rep.complementarity.max((mu[i] * slack).abs());
    }
    rep
}

fn objective(p: &DMatrix<f64>, q: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(p * x)) + q.dot(x)
}

struct Directions {
    z: DVector<f64>,
    r: DVector<f64>,
}

struct Solver<'a> {
    chol: Cholesky<f64, Dyn>,
    // Constraints as `n_iᵀ x ≥ b_i`, i.e. `n_i = −G_i`, `b_i = −h_i`.
    normals: DMatrix<f64>,
    rhs: &'a [f64],
}

impl Solver<'_> {
    fn normal(&self, i: usize) -> DVector<f64> {
        self.normals.column(i).into_owned()
    }

    fn slack(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.normals.column(i).dot(x) - self.rhs[i]
    }

    fn l_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().solve_lower_triangular(v).expect("Cholesky factor is nonsingular")
    }

    fn lt_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().tr_solve_lower_triangular(v).expect("Cholesky factor is nonsingular")
    }

    fn scaled_normals(&self, active: &[usize]) -> DMatrix<f64> {
        let n = self.normals.nrows();
        let mut b = DMatrix::zeros(n, active.len());
        for (c, &i) in active.iter().enumerate() {
            b.set_column(c, &self.l_solve(&self.normal(i)));
        }
        b
    }

    /// Primal step `z = P⁻¹(n_p − N r)` and dual step `r`, where `r`
    /// minimizes `‖L⁻¹(n_p − N r)‖`.
    fn directions(&self, active: &[usize], p: usize) -> Directions {
        let c = self.l_solve(&self.normal(p));
        if active.is_empty() {
            return Directions { z: self.lt_solve(&c), r: DVector::zeros(0) };
        }
        let b = self.scaled_normals(active);
        let qr = b.clone().qr();
        let qtc = qr.q().transpose() * &c;
        let r = qr.r().solve_upper_triangular(&qtc).expect("active normals are independent");
        let resid = &c - &b * &r;
        let z = if resid.norm() <= 1e-10 * c.norm() { DVector::zeros(c.len()) } else { self.lt_solve(&resid) };
        Directions { z, r }
    }

    /// Solves the equality-constrained problem on `active` exactly.
    fn polish(&self, q: &DVector<f64>, active: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let lq = self.l_solve(q);
        if active.is_empty() {
            return Some((-self.lt_solve(&lq), DVector::zeros(0)));
        }
        let b = self.scaled_normals(active);
        let rhs = DVector::from_iterator(active.len(), active.iter().map(|&i| self.rhs[i])) + b.transpose() * &lq;
        let gram = b.transpose() * &b;
        let u = gram.cholesky()?.solve(&rhs);
        let x = self.lt_solve(&(&b * &u - lq));
        Some((x, u))
    }
}

/// Iteration cap on added or dropped constraints.
pub fn iteration_cap(n: usize, m: usize) -> usize {
    100 * (n + m).max(1)
}

/// Solves `min ½ xᵀPx + qᵀx` subject to `Gx ≤ h`.
pub fn solve_constrained_qp(p: &DMatrix<f64>, q: &[f64], g: &DMatrix<f64>, h: &[f64]) -> Result<QpSolution> {
    let n = p.nrows();
    let m = g.nrows();
    if p.ncols() != n || q.len() != n {
        return Err(invalid("objective dimensions do not agree"));
    }
    if m > 0 && g.ncols() != n {
        return Err(invalid("constraint matrix has the wrong column count"));
    }
    if h.len() != m {
        return Err(invalid("constraint bound count does not match the constraint matrix"));
    }
    if p.iter().chain(q).chain(g.iter()).chain(h).any(|v| !v.is_finite()) {
        return Err(invalid("QP data must be finite"));
    }
    let sym = (p - p.transpose()).amax();
    if sym > 1e-10 * p.amax().max(1.0) {
        return Err(invalid("objective matrix is not symmetric"));
    }
    let chol =
        Cholesky::new(p.clone()).ok_or_else(|| Error::Singular("objective matrix is not positive definite".into()))?;
    let qv = DVector::from_column_slice(q);
    let neg_h: Vec<f64> = h.iter().map(|v| -v).collect();
    let solver = Solver { chol, normals: if m > 0 { -g.transpose() } else { DMatrix::zeros(n, 0) }, rhs: &neg_h };

    let row_scale: Vec<f64> = (0..m).map(|i| solver.normals.column(i).norm().max(1.0)).collect();
    let feas_tol = |i: usize| 1e-12 * row_scale[i] * (1.0 + neg_h[i].abs());

    let mut x = -solver.lt_solve(&solver.l_solve(&qv));
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let cap = iteration_cap(n, m);
    let mut iterations = 0;

    loop {
        // Most violated constraint, scaled by its normal length.
        let pick = (0..m)
            .filter(|i| !active.contains(i))
            .map(|i| (i, solver.slack(i, &x)))
            .filter(|&(i, s)| s < -feas_tol(i))
            .min_by(|a, b| (a.1 / row_scale[a.0]).total_cmp(&(b.1 / row_scale[b.0])).then(a.0.cmp(&b.0)));
        let Some((pidx, _)) = pick else { break };
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > cap {
                let mut mu = vec![0.0; m];
                for (&i, &ui) in active.iter().zip(&u) {
                    mu[i] = ui;
                }
                let rep = kkt_report(p, q, g, h, x.as_slice(), &mu);
                return Err(Error::NotConverged {
                    iterations: cap,
                    kkt_residual: rep.max(),
                    best: x.as_slice().to_vec(),
                });
            }
            let dir = solver.directions(&active, pidx);
            let np = solver.normal(pidx);

            // Partial (dual) step length and blocking constraint.
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (j, &rj) in dir.r.iter().enumerate() {
                if rj > 0.0 {
                    let t = u[j] / rj;
                    if t < t1 {
                        t1 = t;
                        block = Some(j);
                    }
                }
            }
            // Full (primal) step length.
            let zn = dir.z.dot(&np);
            let t2 =
                if dir.z.iter().all(|v| *v == 0.0) || zn <= 0.0 { f64::INFINITY } else { -solver.slack(pidx, &x) / zn };
            let t = t1.min(t2);
            if t.is_infinite() {
                return Err(Error::Infeasible(format!(
                    "constraint {pidx} cannot be satisfied together with the active set"
                )));
            }

            for (uj, rj) in u.iter_mut().zip(dir.r.iter()) {
                *uj -= t * rj;
            }
            u_p += t;
            if t2.is_finite() {
                x += t * &dir.z;
            }
            if t == t2 {
                active.push(pidx);
                u.push(u_p);
                break;
            }
            let j = block.expect("finite partial step has a blocking constraint");
            active.remove(j);
            u.remove(j);
        }
    }

    if let Some((xp, up)) = solver.polish(&qv, &active) {
        let feasible = (0..m).all(|i| solver.slack(i, &xp) >= -feas_tol(i));
        if feasible && up.iter().all(|v| *v >= -1e-12) {
            x = xp;
            u = up.iter().map(|v| v.max(0.0)).collect();
        }
    }

    let mut duals = vec![0.0; m];
    for (&i, &ui) in active.iter().zip(&u) {
        duals[i] = ui;
    }
    let kkt = kkt_report(p, q, g, h, x.as_slice(), &duals);
    Ok(QpSolution { objective: objective(p, &qv, &x), x: x.as_slice().to_vec(), duals, active, iterations, kkt })
}
