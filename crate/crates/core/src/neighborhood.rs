//! k-NN neighborhood label counts and the basis statistics built from them.
//!
//! For every sample `x_i` the neighborhood `N_k(x_i)` holds `x_i` itself and
//! its `k - 1` nearest other samples (Euclidean distance, ties to the lower
//! index). `Phi_k(x_i)` counts the class-1 members of that neighborhood, the
//! base point included, and `rho_r` is the fraction of samples with
//! `Phi_k = r`. As `N` grows with `k / N -> 0`, `rho_r` tends to the
//! integral of the `r`-th Bernstein polynomial of the class posterior, and
//! `k rho_r` samples the density of the posterior at `r / k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{LabeledDataset, Points};
use crate::error::{invalid, Error, Result};
use crate::kdtree::{sq_dist, Candidate, KdTree};

/// Exact nearest-neighbor search strategy. Both give identical answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSearch {
    /// All pairwise distances, `O(N^2 d)`.
    #[default]
    BruteForce,
    /// k-d tree with exact tie handling.
    KdTree,
}

impl std::str::FromStr for NeighborSearch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" | "brute_force" => Ok(Self::BruteForce),
            "kdtree" | "kd_tree" => Ok(Self::KdTree),
            other => Err(invalid(format!("unknown neighbor search `{other}`"))),
        }
    }
}

/// `N` neighborhoods of `k` member indices, base point first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhoods {
    k: usize,
    members: Vec<usize>,
}

impl Neighborhoods {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.members.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn get(&self, i: usize) -> &[usize] {
        &self.members[i * self.k..(i + 1) * self.k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.members.chunks_exact(self.k)
    }
}

fn brute_force_nearest(points: &Points, query: usize, m: usize) -> Vec<Candidate> {
    let q = points.row(query);
    let mut all: Vec<Candidate> = (0..points.len())
        .filter(|&j| j != query)
        .map(|j| Candidate { dist: sq_dist(q, points.row(j)), index: j })
        .collect();
    if m < all.len() {
        all.select_nth_unstable(m);
        all.truncate(m);
    }
    all.sort_unstable();
    all
}

/// Neighborhoods `{i} ∪ (k - 1 nearest others)` for every row.
pub fn knn_neighborhoods(points: &Points, k: usize, search: NeighborSearch) -> Result<Neighborhoods> {
    let n = points.len();
    if k < 2 {
        return Err(invalid(format!("neighborhood size k = {k} must be at least 2")));
    }
    if k > n {
        return Err(invalid(format!("neighborhood size k = {k} exceeds sample count {n}")));
    }
    if points.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(invalid("point coordinates must be finite"));
    }
    let mut members = vec![0usize; n * k];
    match search {
        NeighborSearch::BruteForce => {
            members.par_chunks_mut(k).enumerate().for_each(|(i, out)| {
                out[0] = i;
                for (slot, c) in out[1..].iter_mut().zip(brute_force_nearest(points, i, k - 1)) {
                    *slot = c.index;
                }
            });
        }
        NeighborSearch::KdTree => {
            let tree = KdTree::build(points);
            members.par_chunks_mut(k).enumerate().for_each(|(i, out)| {
                out[0] = i;
                for (slot, c) in out[1..].iter_mut().zip(tree.nearest_excluding_self(i, k - 1)) {
                    *slot = c.index;
                }
            });
        }
    }
    Ok(Neighborhoods { k, members })
}

/// Number of class-1 members of each neighborhood, base point included.
pub fn phi_k(labels: &[u8], neighborhoods: &Neighborhoods) -> Result<Vec<usize>> {
    if labels.len() != neighborhoods.len() {
        return Err(invalid("neighborhoods were computed for a different dataset"));
    }
    Ok(neighborhoods.iter().map(|nb| nb.iter().map(|&j| labels[j] as usize).sum()).collect())
}

/// The `k + 1` basis statistics `rho_r`, `r = 0..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoVector {
    rho: Vec<f64>,
    counts: Vec<usize>,
    k: usize,
    n: usize,
}

impl RhoVector {
    /// Builds the statistics from per-sample label counts.
    pub fn from_phi(phi: &[usize], k: usize) -> Result<Self> {
        let n = phi.len();
        if n == 0 {
            return Err(invalid("no samples"));
        }
        let mut counts = vec![0usize; k + 1];
        for &v in phi {
            if v > k {
                return Err(invalid(format!("label count {v} exceeds neighborhood size {k}")));
            }
            counts[v] += 1;
        }
        let rho = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Self { rho, counts, k, n })
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    /// Number of samples with `Phi_k = r`; these sum to `n` exactly.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// `rho_r = #{i : Phi_k(x_i) = r} / N`.
pub fn rho_stats(dataset: &LabeledDataset, k: usize, search: NeighborSearch) -> Result<RhoVector> {
    if k >= dataset.len() {
        return Err(invalid(format!(
            "neighborhood size k = {k} must be smaller than the sample count {}",
            dataset.len()
        )));
    }
    let nb = knn_neighborhoods(dataset.points(), k, search)?;
    let phi = phi_k(dataset.labels(), &nb)?;
    RhoVector::from_phi(&phi, k)
}

/// Samples of the posterior density on the grid `r / m`, `r = 0..=m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDensityEstimate {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl PosteriorDensityEstimate {
    /// Nonnegative values at equally spaced abscissae `r / (len - 1)`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid("a density estimate needs at least two grid values"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("density values must be finite and nonnegative"));
        }
        let m = values.len() - 1;
        let grid = (0..=m).map(|r| r as f64 / m as f64).collect();
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trapezoidal integral of the piecewise-linear interpolant on `[0, 1]`.
    pub fn integral(&self) -> f64 {
        let h = 1.0 / (self.values.len() - 1) as f64;
        self.values.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum()
    }

    /// Linear interpolation between grid values; exact at grid points.
    pub fn interpolate(&self, eta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Domain { what: "eta", value: eta, domain: "[0, 1]" });
        }
        let m = self.values.len() - 1;
        let pos = eta * m as f64;
        let nearest = pos.round();
        if (pos - nearest).abs() <= 1e-9 {
            return Ok(self.values[nearest as usize]);
        }
        let i = (pos.floor() as usize).min(m - 1);
        let t = pos - i as f64;
        Ok((1.0 - t) * self.values[i] + t * self.values[i + 1])
    }
}

/// `k rho_r` at abscissa `r / k`.
pub fn posterior_density_estimate(rho: &RhoVector) -> PosteriorDensityEstimate {
    let k = rho.k() as f64;
    PosteriorDensityEstimate::from_values(rho.values().iter().map(|r| k * r).collect())
        .expect("rho values are nonnegative and k >= 1")
}

/// Evaluates the piecewise-linear density estimate at each `eta`.
pub fn interp_density(est: &PosteriorDensityEstimate, etas: &[f64]) -> Result<Vec<f64>> {
    etas.iter().map(|&e| est.interpolate(e)).collect()
}
