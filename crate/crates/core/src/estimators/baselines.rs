//! Gaussian plug-in estimators and the classical Bayes error bounds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{LabeledDataset, Points};
use crate::distribution::{ClassDistribution, ClassPair, Gaussian};
use crate::error::{invalid, Result};
use crate::functionals::{MapFamily, PosteriorMap};
use crate::oracles::gaussian_divergence;

/// Ridge added to a singular sample covariance.
pub const COVARIANCE_JITTER: f64 = 1e-9;

/// Gauss–Hermite nodes per axis for plug-in integrals in low dimension.
const HERMITE_NODES: usize = 40;
/// Largest dimension integrated by tensor-product quadrature.
const MAX_QUADRATURE_DIM: usize = 3;
/// Draws per class for plug-in integrals above that dimension.
const PLUGIN_MC_DRAWS: usize = 200_000;
const PLUGIN_MC_SEED: u64 = 0x5eed;

/// Maximum-likelihood Gaussian fit of one class.
#[derive(Debug, Clone)]
pub struct GaussianFit {
    pub gaussian: Gaussian,
    /// `COVARIANCE_JITTER * I` was added to make the covariance invertible.
    pub regularized: bool,
}

/// Sample mean and `1/n` sample covariance.
pub fn fit_gaussian(points: &Points) -> Result<GaussianFit> {
    let n = points.len();
    let d = points.dim();
    if n <= d {
        return Err(invalid(format!("{n} points cannot determine a {d}-dimensional covariance")));
    }
    let mut mean = DVector::zeros(d);
    for r in points.rows() {
        mean += DVector::from_column_slice(r);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for r in points.rows() {
        let c = DVector::from_column_slice(r) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n as f64;
    match Gaussian::new(mean.clone(), cov.clone()) {
        Ok(g) => Ok(GaussianFit { gaussian: g, regularized: false }),
        Err(_) => {
            let g = Gaussian::new(mean, cov + DMatrix::identity(d, d) * COVARIANCE_JITTER)?;
            Ok(GaussianFit { gaussian: g, regularized: true })
        }
    }
}

/// Plug-in value of a functional and whether a covariance was regularized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluginValue {
    pub value: f64,
    pub regularized: bool,
}

/// Fits a Gaussian per class and evaluates the functional under the fit.
///
/// Hellinger and KL use closed forms. `Dp` integrates `g_Dp(eta)` under the
/// fitted mixture by Gauss–Hermite quadrature for `d <= 3` and by Monte
/// Carlo with a fixed seed above.
pub fn parametric_plugin_value(ds: &LabeledDataset, target: MapFamily) -> Result<PluginValue> {
    let f0 = fit_gaussian(&ds.class_points(0))?;
    let f1 = fit_gaussian(&ds.class_points(1))?;
    let regularized = f0.regularized || f1.regularized;
    let value = match target {
        MapFamily::HellingerSq | MapFamily::Kl01 | MapFamily::Kl10 => {
            gaussian_divergence(target, &f0.gaussian, &f1.gaussian)?.value
        }
        MapFamily::Dp => {
            let (p0, p1) = ds.priors();
            let g = PosteriorMap::dp(p0)?;
            let pair =
                ClassPair::new(ClassDistribution::Gaussian(f0.gaussian), ClassDistribution::Gaussian(f1.gaussian), p0)?;
            let e0 = gaussian_expectation(&pair, 0, &g)?;
            let e1 = gaussian_expectation(&pair, 1, &g)?;
            p0 * e0 + p1 * e1
        }
        other => return Err(invalid(format!("no parametric plug-in for `{}`", other.name()))),
    };
    Ok(PluginValue { value, regularized })
}

/// Nodes and weights of the physicists' Gauss–Hermite rule, by Golub–Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi =
        DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `E[g(eta(x))]` for `x` drawn from class `class` of a Gaussian pair.
fn gaussian_expectation(pair: &ClassPair, class: u8, g: &PosteriorMap) -> Result<f64> {
    let dist = if class == 0 { &pair.f0 } else { &pair.f1 };
    let ClassDistribution::Gaussian(gauss) = dist else {
        return Err(invalid("plug-in integration expects Gaussian classes"));
    };
    let d = gauss.dim();
    if d <= MAX_QUADRATURE_DIM {
        let (nodes, weights) = gauss_hermite(HERMITE_NODES);
        let l = gauss.cov().clone().cholesky().expect("fitted covariance is positive definite").l();
        let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
        let mut idx = vec![0usize; d];
        let mut total = 0.0;
        let mut z = DVector::zeros(d);
        loop {
            let mut w = norm;
            for (a, &i) in idx.iter().enumerate() {
                z[a] = std::f64::consts::SQRT_2 * nodes[i];
                w *= weights[i];
            }
            let x = gauss.mean() + &l * &z;
            total += w * g.eval(pair.posterior(x.as_slice()))?;
            // Odometer increment over the tensor grid.
            let mut a = 0;
            while a < d {
                idx[a] += 1;
                if idx[a] < HERMITE_NODES {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == d {
                break;
            }
        }
        Ok(total)
    } else {
        let mut rng = ChaCha20Rng::seed_from_u64(PLUGIN_MC_SEED);
        rng.set_stream(class as u64);
        let mut x = vec![0.0; d];
        let mut sum = 0.0;
        for _ in 0..PLUGIN_MC_DRAWS {
            gauss.sample_into(&mut rng, &mut x);
            sum += g.eval(pair.posterior(&x))?;
        }
        Ok(sum / PLUGIN_MC_DRAWS as f64)
    }
}

/// A lower and upper bound on the Bayes error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerBounds {
    pub lower: f64,
    pub upper: f64,
    /// The input divergence was outside `[0, 1]` and was clamped.
    pub clamped: bool,
}

fn clamp_unit(v: f64) -> Result<(f64, bool)> {
    if v.is_nan() {
        return Err(invalid("bound input is NaN"));
    }
    let c = v.clamp(0.0, 1.0);
    Ok((c, c != v))
}

/// Bhattacharyya bounds `(1/2 - 1/2 sqrt(1 - BC^2), BC / 2)` with `BC = 1 - H^2`.
pub fn bhattacharyya_bounds(hellinger_sq: f64) -> Result<BerBounds> {
    let (h2, clamped) = clamp_unit(hellinger_sq)?;
    let bc = 1.0 - h2;
    Ok(BerBounds { lower: 0.5 - 0.5 * (1.0 - bc * bc).sqrt(), upper: 0.5 * bc, clamped })
}

/// `(1/2 - 1/2 sqrt(u), 1/2 - 1/2 u)` for the balanced `D_p` divergence `u`.
pub fn dp_bounds(dp_half: f64) -> Result<BerBounds> {
    let (u, clamped) = clamp_unit(dp_half)?;
    Ok(BerBounds { lower: 0.5 - 0.5 * u.sqrt(), upper: 0.5 - 0.5 * u, clamped })
}
