//! Class-conditional distributions used by the synthetic experiments.
//!
//! Two families are supported: multivariate Gaussians (sampled through a
//! Cholesky factor of the covariance) and uniform hypercubes. Both expose a
//! log-density so that oracles can evaluate the exact class posterior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parametric family of a class distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    UniformCube,
}

/// Scalar-parameterised class distribution.
///
/// For [`Family::Gaussian`] the mean is `mu * 1_d` and the covariance has
/// entries `beta^|i-j|`. For [`Family::UniformCube`] the support is
/// `[mu - beta, mu + beta]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub family: Family,
    pub mu: f64,
    pub beta: f64,
    pub d: usize,
}

impl DistributionSpec {
    pub fn gaussian(mu: f64, beta: f64, d: usize) -> Self {
        Self { family: Family::Gaussian, mu, beta, d }
    }

    pub fn uniform_cube(mu: f64, beta: f64, d: usize) -> Self {
        Self { family: Family::UniformCube, mu, beta, d }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !self.mu.is_finite() || !self.beta.is_finite() {
            return Err(invalid("distribution parameters must be finite"));
        }
        match self.family {
            Family::Gaussian if self.beta.abs() >= 1.0 => Err(Error::Domain {
                what: "beta",
                value: self.beta,
                domain: "(-1, 1) for a positive definite covariance",
            }),
            Family::UniformCube if self.beta <= 0.0 => {
                Err(Error::Domain { what: "beta", value: self.beta, domain: "(0, inf) for a uniform half-width" })
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<ClassDistribution> {
        self.validate()?;
        Ok(match self.family {
            Family::Gaussian => {
                let d = self.d;
                let cov = DMatrix::from_fn(d, d, |i, j| self.beta.powi((i as i32 - j as i32).abs()));
                ClassDistribution::Gaussian(Gaussian::new(DVector::from_element(d, self.mu), cov)?)
            }
            Family::UniformCube => {
                ClassDistribution::UniformCube(UniformCube { center: self.mu, half_width: self.beta, d: self.d })
            }
        })
    }
}

/// Multivariate normal with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(invalid(format!("covariance is {}x{} but mean has length {d}", cov.nrows(), cov.ncols())));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("gaussian parameters must be finite"));
        }
        let chol = cov.clone().cholesky().ok_or_else(|| invalid("covariance matrix is not positive definite"))?.l();
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (d as f64 * LN_2PI + log_det);
        Ok(Self { mean, cov, chol, log_norm })
    }

    /// Independent coordinates with the given means and variances.
    pub fn diagonal(mean: &[f64], variances: &[f64]) -> Result<Self> {
        if mean.len() != variances.len() {
            return Err(invalid("mean and variance vectors differ in length"));
        }
        Self::new(DVector::from_column_slice(mean), DMatrix::from_diagonal(&DVector::from_column_slice(variances)))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Log-determinant of the covariance.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        // Forward substitution L z = x - mean.
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut acc = x[i] - self.mean[i];
            for j in 0..i {
                acc -= self.chol[(i, j)] * z[j];
            }
            z[i] = acc / self.chol[(i, i)];
        }
        self.log_norm - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= z.len() {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for i in 0..d {
            let mut acc = self.mean[i];
            for j in 0..=i {
                acc += self.chol[(i, j)] * z[j];
            }
            out[i] = acc;
        }
    }
}

/// Uniform distribution on `[center - half_width, center + half_width]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformCube {
    pub center: f64,
    pub half_width: f64,
    pub d: usize,
}

impl UniformCube {
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let inside = x.iter().all(|&v| (v - self.center).abs() <= self.half_width);
        if inside {
            -(self.d as f64) * (2.0 * self.half_width).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            let u: f64 = rng.random();
            *v = self.center - self.half_width + 2.0 * self.half_width * u;
        }
    }
}

/// A class-conditional density that can be sampled and evaluated.
#[derive(Debug, Clone)]
pub enum ClassDistribution {
    Gaussian(Gaussian),
    UniformCube(UniformCube),
}

impl ClassDistribution {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::UniformCube(u) => u.d,
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        match self {
            Self::Gaussian(g) => g.log_pdf(x),
            Self::UniformCube(u) => u.log_pdf(x),
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::Gaussian(g) => g.sample_into(rng, out),
            Self::UniformCube(u) => u.sample_into(rng, out),
        }
    }

    /// Mean vector and covariance matrix of the distribution.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        match self {
            Self::Gaussian(g) => (g.mean.clone(), g.cov.clone()),
            Self::UniformCube(u) => {
                let var = u.half_width * u.half_width / 3.0;
                (DVector::from_element(u.d, u.center), DMatrix::from_diagonal_element(u.d, u.d, var))
            }
        }
    }
}

/// Two-class generative model: class densities plus the class-0 prior.
#[derive(Debug, Clone)]
pub struct ClassPair {
    pub f0: ClassDistribution,
    pub f1: ClassDistribution,
    pub p0: f64,
}

impl ClassPair {
    pub fn new(f0: ClassDistribution, f1: ClassDistribution, p0: f64) -> Result<Self> {
        if f0.dim() != f1.dim() {
            return Err(invalid("class distributions have different dimensions"));
        }
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::Domain { what: "p0", value: p0, domain: "(0, 1)" });
        }
        Ok(Self { f0, f1, p0 })
    }

    pub fn p1(&self) -> f64 {
        1.0 - self.p0
    }

    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    /// Class-1 posterior at `x` computed from the exact densities.
    pub fn posterior(&self, x: &[f64]) -> f64 {
        let a = self.p0.ln() + self.f0.log_pdf(x);
        let b = self.p1().ln() + self.f1.log_pdf(x);
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            // Outside both supports; never reached when sampling from the mixture.
            return self.p1();
        }
        // eta = 1 / (1 + exp(a - b)), evaluated without overflow.
        let t = a - b;
        if t >= 0.0 {
            let e = (-t).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + t.exp())
        }
    }
}
