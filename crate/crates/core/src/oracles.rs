//! Ground-truth values for the synthetic generative models.
//!
//! Closed forms cover Gaussian Hellinger and KL divergences and the Bayes
//! error of equal-covariance Gaussians. Everything else goes through Monte
//! Carlo integration of `g(eta(x))` with the exact posterior, stratified by
//! class: `p0 E_f0[g(eta)] + p1 E_f1[g(eta)]`.
//!
//! Monte Carlo draws are split into fixed-size chunks. Chunk `j` of class `c`
//! uses the ChaCha20 stream `2 j + c` of the given seed, so results are
//! reproducible and independent of the thread count.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{bernstein_row, BasisWeights};
use crate::datasets::{fmt_f64, Experiment};
use crate::distribution::{ClassDistribution, ClassPair, Gaussian};
use crate::error::{invalid, Error, Result};
use crate::functionals::{MapFamily, PosteriorMap};
use crate::neighborhood::RhoVector;

/// Smallest accepted Monte Carlo sample count.
pub const MIN_MC_SAMPLES: u64 = 10_000;

const MC_CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMethod {
    Analytic,
    McIntegration,
    Quadrature,
}

impl TruthMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Analytic => "analytic",
            Self::McIntegration => "mc_integration",
            Self::Quadrature => "quadrature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub value: f64,
    pub method: TruthMethod,
    pub mc_samples: u64,
    /// Zero for analytic and quadrature values.
    pub std_error: f64,
}

impl GroundTruth {
    pub fn analytic(value: f64) -> Self {
        Self { value, method: TruthMethod::Analytic, mc_samples: 0, std_error: 0.0 }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))
}

fn log_det(m: &DMatrix<f64>) -> Result<f64> {
    let c = m.clone().cholesky().ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?;
    Ok(2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// `H^2 = 1 - BC` between two Gaussians.
pub fn gaussian_hellinger_sq(g0: &Gaussian, g1: &Gaussian) -> Result<f64> {
    let avg = (g0.cov() + g1.cov()) * 0.5;
    let delta = g1.mean() - g0.mean();
    let maha = delta.dot(&(inverse(&avg)? * &delta));
    let ln_bc = 0.25 * g0.log_det() + 0.25 * g1.log_det() - 0.5 * log_det(&avg)? - 0.125 * maha;
    Ok(-ln_bc.exp_m1())
}

/// `KL(g0 || g1)`.
pub fn gaussian_kl(g0: &Gaussian, g1: &Gaussian) -> Result<f64> {
    let s1_inv = inverse(g1.cov())?;
    let delta = g1.mean() - g0.mean();
    let d = g0.dim() as f64;
    let tr = (&s1_inv * g0.cov()).trace();
    Ok(0.5 * (tr + delta.dot(&(&s1_inv * &delta)) - d + g1.log_det() - g0.log_det()))
}

/// Closed-form Hellinger or KL divergence between two Gaussians.
///
/// `Kl01` is `KL(f0 || f1)` and `Kl10` is `KL(f1 || f0)`; Hellinger is the
/// squared distance with the one-half convention.
pub fn analytic_gaussian_divergence(
    target: MapFamily,
    mu0: &[f64],
    s0: &DMatrix<f64>,
    mu1: &[f64],
    s1: &DMatrix<f64>,
) -> Result<GroundTruth> {
    let g0 = Gaussian::new(DVector::from_column_slice(mu0), s0.clone())?;
    let g1 = Gaussian::new(DVector::from_column_slice(mu1), s1.clone())?;
    gaussian_divergence(target, &g0, &g1)
}

pub fn gaussian_divergence(target: MapFamily, g0: &Gaussian, g1: &Gaussian) -> Result<GroundTruth> {
    if g0.dim() != g1.dim() {
        return Err(invalid("Gaussians have different dimensions"));
    }
    let v = match target {
        MapFamily::HellingerSq => gaussian_hellinger_sq(g0, g1)?,
        MapFamily::Kl01 => gaussian_kl(g0, g1)?,
        MapFamily::Kl10 => gaussian_kl(g1, g0)?,
        other => return Err(invalid(format!("no closed form for `{}`", other.name()))),
    };
    Ok(GroundTruth::analytic(v))
}

#[derive(Clone)]
struct Moments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(width: usize) -> Self {
        Self { n: 0, mean: vec![0.0; width], m2: vec![0.0; width] }
    }

    fn push(&mut self, v: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(v) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        if other.n == 0 {
            return self;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.n += other.n;
        self
    }

    fn variance_of_mean(&self, i: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2[i] / (self.n - 1) as f64 / self.n as f64
    }
}

fn class_moments<F>(
    dist: &ClassDistribution,
    pair: &ClassPair,
    class: u64,
    n: u64,
    seed: u64,
    width: usize,
    f: &F,
) -> Result<Moments>
where
    F: Fn(f64, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let d = pair.dim();
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(2 * j + class);
            let len = MC_CHUNK.min(n - j * MC_CHUNK);
            let mut x = vec![0.0; d];
            let mut out = vec![0.0; width];
            let mut acc = Moments::new(width);
            for _ in 0..len {
                dist.sample_into(&mut rng, &mut x);
                f(pair.posterior(&x), &mut out)?;
                acc.push(&out);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().fold(Moments::new(width), |a, b| a.merge(b)))
}

/// Stratified estimate of `E[f(eta(x))]` under the mixture, per component.
fn stratified_mc<F>(pair: &ClassPair, m: u64, seed: u64, width: usize, f: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(f64, &mut [f64]) -> Result<()> + Sync,
{
    if m < MIN_MC_SAMPLES {
        return Err(invalid(format!("Monte Carlo needs at least {MIN_MC_SAMPLES} draws, got {m}")));
    }
    let n0 = ((pair.p0 * m as f64).round() as u64).clamp(2, m - 2);
    let n1 = m - n0;
    let a = class_moments(&pair.f0, pair, 0, n0, seed, width, &f)?;
    let b = class_moments(&pair.f1, pair, 1, n1, seed, width, &f)?;
    let (p0, p1) = (pair.p0, pair.p1());
    let mean = (0..width).map(|i| p0 * a.mean[i] + p1 * b.mean[i]).collect();
    let se = (0..width).map(|i| (p0 * p0 * a.variance_of_mean(i) + p1 * p1 * b.variance_of_mean(i)).sqrt()).collect();
    Ok((mean, se))
}

/// Monte Carlo value of `G = E[g(eta(x))]` with the exact posterior.
pub fn mc_integral_functional(pair: &ClassPair, g: &PosteriorMap, m: u64, seed: u64) -> Result<GroundTruth> {
    let (mean, se) = stratified_mc(pair, m, seed, 1, |eta, out| {
        out[0] = g.eval(eta)?;
        Ok(())
    })?;
    Ok(GroundTruth { value: mean[0], method: TruthMethod::McIntegration, mc_samples: m, std_error: se[0] })
}

/// `E[g(eta)]` for two Gaussians sharing a covariance, by one-dimensional
/// quadrature along the discriminant direction.
///
/// With Mahalanobis distance `delta` between the means, the projection onto
/// the discriminant is `N(0, 1)` under class 0 and `N(delta, 1)` under class
/// 1, and the posterior depends on `x` only through it.
pub fn equal_covariance_quadrature(g: &PosteriorMap, delta: f64, p0: f64) -> Result<GroundTruth> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(invalid("Mahalanobis distance must be finite and nonnegative"));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Domain { what: "p0", value: p0, domain: "(0, 1)" });
    }
    let p1 = 1.0 - p0;
    let lo = -12.0;
    let hi = delta + 12.0;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let integrand = |t: f64| -> Result<f64> {
        let log_odds = (p1 / p0).ln() + delta * t - 0.5 * delta * delta;
        let eta = if log_odds >= 0.0 {
            1.0 / (1.0 + (-log_odds).exp())
        } else {
            let e = log_odds.exp();
            e / (1.0 + e)
        };
        Ok(g.eval(eta)? * (p0 * phi(t) + p1 * phi(t - delta)))
    };
    let simpson = |a: f64, b: f64, n: usize| -> Result<f64> {
        let h = (b - a) / n as f64;
        let mut sum = integrand(a)? + integrand(b)?;
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * integrand(a + i as f64 * h)?;
        }
        Ok(sum * h / 3.0)
    };
    // Maps such as min(eta, 1 - eta) have a kink where eta = 1/2; split there.
    let split = if delta > 0.0 { (0.5 * delta * delta + (p0 / p1).ln()) / delta } else { f64::NAN };
    let value = if split > lo && split < hi {
        simpson(lo, split, 12_000)? + simpson(split, hi, 12_000)?
    } else {
        simpson(lo, hi, 24_000)?
    };
    Ok(GroundTruth { value, method: TruthMethod::Quadrature, mc_samples: 0, std_error: 0.0 })
}

/// Limits `rho*_r = E[C(k, r) eta^r (1 - eta)^(k - r)]` with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRho {
    pub values: Vec<f64>,
    pub std_error: Vec<f64>,
    pub mc_samples: u64,
}

pub fn asymptotic_rho(pair: &ClassPair, k: usize, m: u64, seed: u64) -> Result<AsymptoticRho> {
    if k == 0 {
        return Err(invalid("basis degree must be at least 1"));
    }
    let (mut values, std_error) = stratified_mc(pair, m, seed, k + 1, |eta, out| {
        out.copy_from_slice(&bernstein_row(k, eta)?);
        Ok(())
    })?;
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= total);
    Ok(AsymptoticRho { values, std_error, mc_samples: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BerMethod {
    AnalyticEqualCov,
    Mc,
}

fn shared_covariance_gaussians(pair: &ClassPair) -> Option<(&Gaussian, &Gaussian)> {
    match (&pair.f0, &pair.f1) {
        (ClassDistribution::Gaussian(a), ClassDistribution::Gaussian(b)) => {
            let diff = (a.cov() - b.cov()).amax();
            (diff <= 1e-12 * a.cov().amax().max(1.0)).then_some((a, b))
        }
        _ => None,
    }
}

/// Bayes error of two Gaussians with a shared covariance.
///
/// `p0 Phi((-tau - D^2/2) / D) + p1 Phi((tau - D^2/2) / D)` with
/// `tau = ln(p0 / p1)` and Mahalanobis distance `D`.
pub fn analytic_equal_cov_ber(pair: &ClassPair) -> Result<f64> {
    let (a, b) = shared_covariance_gaussians(pair)
        .ok_or_else(|| invalid("analytic Bayes error needs two Gaussians with equal covariance"))?;
    let delta = b.mean() - a.mean();
    let d2 = delta.dot(&(inverse(a.cov())? * &delta));
    let (p0, p1) = (pair.p0, pair.p1());
    if d2 == 0.0 {
        return Ok(p0.min(p1));
    }
    let d = d2.sqrt();
    let tau = (p0 / p1).ln();
    Ok(p0 * normal_cdf((-tau - 0.5 * d2) / d) + p1 * normal_cdf((tau - 0.5 * d2) / d))
}

pub fn true_ber(pair: &ClassPair, method: BerMethod, m: u64, seed: u64) -> Result<GroundTruth> {
    match method {
        BerMethod::AnalyticEqualCov => Ok(GroundTruth::analytic(analytic_equal_cov_ber(pair)?)),
        BerMethod::Mc => mc_integral_functional(pair, &PosteriorMap::ber(), m, seed),
    }
}

/// Split of the total error of a basis estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    /// `truth - sum_r w_r rho*_r`.
    pub approximation: f64,
    /// `sum_r w_r (rho*_r - rho_r)`.
    pub estimation: f64,
    /// `truth - sum_r w_r rho_r`.
    pub total: f64,
}

pub fn error_decomposition(
    weights: &BasisWeights,
    rho: &RhoVector,
    rho_star: &[f64],
    truth: f64,
) -> Result<ErrorDecomposition> {
    if rho_star.len() != rho.values().len() {
        return Err(invalid("asymptotic and empirical basis statistics differ in length"));
    }
    let estimate = weights.apply(rho.values())?;
    let asymptote = weights.apply(rho_star)?;
    let estimation = weights.w.iter().zip(rho_star.iter().zip(rho.values())).map(|(w, (s, r))| w * (s - r)).sum();
    Ok(ErrorDecomposition { approximation: truth - asymptote, estimation, total: truth - estimate })
}

/// Truth of a functional for one of the synthetic experiments: closed form
/// where one exists, otherwise Monte Carlo.
pub fn experiment_truth(
    experiment: Experiment,
    d: usize,
    family: MapFamily,
    mc_samples: u64,
    seed: u64,
) -> Result<GroundTruth> {
    let pair = experiment.class_pair(d)?;
    pair_truth(&pair, family, mc_samples, seed)
}

pub fn pair_truth(pair: &ClassPair, family: MapFamily, mc_samples: u64, seed: u64) -> Result<GroundTruth> {
    if let (ClassDistribution::Gaussian(a), ClassDistribution::Gaussian(b)) = (&pair.f0, &pair.f1) {
        if matches!(family, MapFamily::HellingerSq | MapFamily::Kl01 | MapFamily::Kl10) {
            return gaussian_divergence(family, a, b);
        }
        if family == MapFamily::Ber && shared_covariance_gaussians(pair).is_some() {
            return Ok(GroundTruth::analytic(analytic_equal_cov_ber(pair)?));
        }
    }
    let g = PosteriorMap::from_family(family, pair.p0, pair.p1())?;
    mc_integral_functional(pair, &g, mc_samples, seed).map_err(|e| match e {
        Error::Domain { .. } => invalid(format!(
            "`{}` is unbounded for this model (the posterior reaches 0 or 1 with positive probability)",
            family.name()
        )),
        other => other,
    })
}

/// Cache key of a truth value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TruthKey {
    pub experiment: String,
    pub functional: String,
    pub mc_samples: u64,
    pub seed: u64,
}

/// Truth values keyed by `(experiment, functional, M, seed)`, stored as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthManifest {
    entries: BTreeMap<TruthKey, GroundTruth>,
}

pub const TRUTH_MANIFEST_HEADER: &str = "experiment,functional,mc_samples,seed,value,std_error,method";

impl TruthManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &TruthKey) -> Option<&GroundTruth> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: TruthKey, truth: GroundTruth) {
        self.entries.insert(key, truth);
    }

    pub fn get_or_compute(
        &mut self,
        key: TruthKey,
        compute: impl FnOnce() -> Result<GroundTruth>,
    ) -> Result<GroundTruth> {
        if let Some(t) = self.entries.get(&key) {
            return Ok(*t);
        }
        let t = compute()?;
        self.entries.insert(key, t);
        Ok(t)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRUTH_MANIFEST_HEADER}")?;
        for (k, t) in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                k.experiment,
                k.functional,
                k.mc_samples,
                k.seed,
                fmt_f64(t.value),
                fmt_f64(t.std_error),
                t.method.name()
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != TRUTH_MANIFEST_HEADER {
            return Err(Error::Parse("truth manifest header is missing or malformed".into()));
        }
        let mut m = Self::new();
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("truth manifest line {}: `{line}`", ln + 2));
            if f.len() != 7 {
                return Err(bad());
            }
            let method = match f[6] {
                "analytic" => TruthMethod::Analytic,
                "mc_integration" => TruthMethod::McIntegration,
                "quadrature" => TruthMethod::Quadrature,
                _ => return Err(bad()),
            };
            let key = TruthKey {
                experiment: f[0].to_string(),
                functional: f[1].to_string(),
                mc_samples: f[2].parse().map_err(|_| bad())?,
                seed: f[3].parse().map_err(|_| bad())?,
            };
            let truth = GroundTruth {
                value: f[4].parse().map_err(|_| bad())?,
                std_error: f[5].parse().map_err(|_| bad())?,
                mc_samples: key.mc_samples,
                method,
            };
            m.insert(key, truth);
        }
        Ok(m)
    }

    /// Loads a manifest, treating a missing file as empty.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::File::open(path) {
            Ok(f) => Self::read_csv(std::io::BufReader::new(f)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}
