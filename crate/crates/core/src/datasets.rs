//! Labeled two-class sample data and the synthetic generators used by the
//! experiments.
//!
//! Every generator is a pure function of its parameters and a 64-bit seed;
//! the seed drives a ChaCha20 stream so datasets are bit-reproducible.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{ClassDistribution, ClassPair, DistributionSpec, Gaussian};
use crate::error::{invalid, Error, Result};

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Row-major `n x d` matrix of sample coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    data: Vec<f64>,
    d: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(invalid(format!("{} values do not form rows of dimension {d}", data.len())));
        }
        Ok(Self { data, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(invalid("rows have inconsistent dimension"));
        }
        Self::new(rows.concat(), d)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn extend(&mut self, other: &Points) {
        debug_assert_eq!(self.d, other.d);
        self.data.extend_from_slice(&other.data);
    }
}

/// `n` i.i.d. draws from `dist`, consuming `rng`.
pub fn sample<R: rand::Rng + ?Sized>(dist: &ClassDistribution, n: usize, rng: &mut R) -> Points {
    let d = dist.dim();
    let mut data = vec![0.0; n * d];
    for row in data.chunks_exact_mut(d) {
        dist.sample_into(rng, row);
    }
    Points { data, d }
}

/// Draws from `N(mu * 1_d, Sigma_d)` with `Sigma_ij = beta^|i-j|`.
pub fn gen_gaussian(n: usize, mu: f64, beta: f64, d: usize, seed: u64) -> Result<Points> {
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let dist = DistributionSpec::gaussian(mu, beta, d).build()?;
    Ok(sample(&dist, n, &mut rng_from_seed(seed)))
}

/// Draws uniformly from `[mu - beta, mu + beta]^d`.
pub fn gen_uniform_cube(n: usize, mu: f64, beta: f64, d: usize, seed: u64) -> Result<Points> {
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let dist = DistributionSpec::uniform_cube(mu, beta, d).build()?;
    Ok(sample(&dist, n, &mut rng_from_seed(seed)))
}

/// Pooled two-class sample with binary labels and class priors.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Points,
    labels: Vec<u8>,
    p0: f64,
    p1: f64,
}

impl LabeledDataset {
    /// Builds a dataset, validating every invariant. Priors default to the
    /// empirical class ratio when `priors` is `None`.
    pub fn new(points: Points, labels: Vec<u8>, priors: Option<(f64, f64)>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(invalid(format!("{} points but {} labels", points.len(), labels.len())));
        }
        if labels.len() < 2 {
            return Err(invalid("a dataset needs at least two points"));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(invalid("labels must be 0 or 1"));
        }
        if points.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        let (p0, p1) = match priors {
            Some(p) => p,
            None => estimate_priors(&labels)?,
        };
        if !(p0 > 0.0 && p1 > 0.0) || (p0 + p1 - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("priors ({p0}, {p1}) must be positive and sum to 1")));
        }
        Ok(Self { points, labels, p0, p1 })
    }

    /// Stacks `class0` (label 0) above `class1` (label 1).
    pub fn from_classes(class0: Points, class1: Points, priors: Option<(f64, f64)>) -> Result<Self> {
        if class0.dim() != class1.dim() {
            return Err(invalid("class samples have different dimensions"));
        }
        let mut labels = vec![0u8; class0.len()];
        labels.resize(class0.len() + class1.len(), 1);
        let mut points = class0;
        points.extend(&class1);
        Self::new(points, labels, priors)
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn priors(&self) -> (f64, f64) {
        (self.p0, self.p1)
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.labels.iter().filter(|&&y| y == 1).count();
        (self.len() - n1, n1)
    }

    /// Points of a single class, in dataset order.
    pub fn class_points(&self, label: u8) -> Points {
        let data = self
            .points
            .rows()
            .zip(&self.labels)
            .filter(|(_, &y)| y == label)
            .flat_map(|(r, _)| r.iter().copied())
            .collect();
        Points { data, d: self.dim() }
    }

    /// Reorders rows by `perm` (row `i` of the result is row `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len() || perm.iter().any(|&i| i >= self.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(invalid("not a permutation of the dataset rows"));
        }
        let data = perm.iter().flat_map(|&i| self.points.row(i).iter().copied()).collect();
        let labels = perm.iter().map(|&i| self.labels[i]).collect();
        Ok(Self { points: Points { data, d: self.dim() }, labels, p0: self.p0, p1: self.p1 })
    }

    /// Writes `x1,...,xd,y` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},y", header.join(","))?;
        for (row, y) in self.points.rows().zip(&self.labels) {
            for v in row {
                write!(out, "{},", fmt_f64(*v))?;
            }
            writeln!(out, "{y}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`LabeledDataset::write_csv`]. Priors are
    /// estimated from the labels.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 2 || cols.last() != Some(&"y") {
            return Err(Error::Parse(format!("unexpected header `{header}`")));
        }
        let d = cols.len() - 1;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != d + 1 {
                return Err(Error::Parse(format!("line {}: expected {} fields", lineno + 2, d + 1)));
            }
            for f in &fields[..d] {
                data.push(f.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?);
            }
            labels.push(match fields[d] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::Parse(format!("line {}: bad label `{other}`", lineno + 2))),
            });
        }
        Self::new(Points::new(data, d)?, labels, None)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Class priors from label frequencies.
pub fn estimate_priors(labels: &[u8]) -> Result<(f64, f64)> {
    let n = labels.len();
    let ones = labels.iter().filter(|&&y| y == 1).count();
    if ones == 0 || ones == n {
        return Err(invalid("priors need at least one label of each class"));
    }
    let p1 = ones as f64 / n as f64;
    Ok((1.0 - p1, p1))
}

/// Class distributions of the four synthetic divergence experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    /// Spherical Gaussians with shifted means.
    SphericalShift = 1,
    /// Shared elliptical covariance (`beta = 0.8`).
    SharedElliptical = 2,
    /// Class-dependent elliptical covariance (`beta = 0.8` vs `0.9`).
    DistinctElliptical = 3,
    /// Standard Gaussian against a uniform cube of half-width 3.
    GaussianVsUniform = 4,
}

impl Experiment {
    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            1 => Ok(Self::SphericalShift),
            2 => Ok(Self::SharedElliptical),
            3 => Ok(Self::DistinctElliptical),
            4 => Ok(Self::GaussianVsUniform),
            _ => Err(invalid(format!("unknown experiment id {id} (expected 1..4)"))),
        }
    }

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn specs(self, d: usize) -> (DistributionSpec, DistributionSpec) {
        let shift = (1.0f64 / 3.0).sqrt();
        match self {
            Self::SphericalShift => {
                (DistributionSpec::gaussian(0.0, 0.0, d), DistributionSpec::gaussian(shift, 0.0, d))
            }
            Self::SharedElliptical => {
                (DistributionSpec::gaussian(0.0, 0.8, d), DistributionSpec::gaussian(shift, 0.8, d))
            }
            Self::DistinctElliptical => {
                (DistributionSpec::gaussian(0.0, 0.8, d), DistributionSpec::gaussian(shift, 0.9, d))
            }
            Self::GaussianVsUniform => {
                (DistributionSpec::gaussian(0.0, 0.0, d), DistributionSpec::uniform_cube(0.0, 3.0, d))
            }
        }
    }

    /// Generative model with equal priors.
    pub fn class_pair(self, d: usize) -> Result<ClassPair> {
        let (s0, s1) = self.specs(d);
        ClassPair::new(s0.build()?, s1.build()?, 0.5)
    }
}

/// Default dimension of the synthetic experiments.
pub const DEFAULT_EXPERIMENT_DIM: usize = 3;

fn balanced_dataset(pair: &ClassPair, n_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(invalid("need at least one point per class"));
    }
    let mut rng = rng_from_seed(seed);
    let x0 = sample(&pair.f0, n_per_class, &mut rng);
    let x1 = sample(&pair.f1, n_per_class, &mut rng);
    LabeledDataset::from_classes(x0, x1, Some((0.5, 0.5)))
}

/// Balanced dataset for one of the four synthetic experiments.
pub fn make_experiment_dataset(experiment_id: u32, n_per_class: usize, d: usize, seed: u64) -> Result<LabeledDataset> {
    let pair = Experiment::from_id(experiment_id)?.class_pair(d)?;
    balanced_dataset(&pair, n_per_class, seed)
}

pub const FUKUNAGA_DIM: usize = 8;

/// Class-1 means of the two 8-dimensional Gaussian benchmark sets.
const FUKUNAGA_MEAN1: [[f64; 8]; 2] =
    [[2.56, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [3.86, 3.10, 0.84, 0.84, 1.64, 1.08, 0.26, 0.01]];

/// Class-1 per-coordinate variances. Class 0 is always `N(0, I_8)`.
const FUKUNAGA_VAR1: [[f64; 8]; 2] = [[1.0; 8], [8.41, 12.06, 0.12, 0.22, 1.49, 1.77, 0.35, 2.73]];

/// Generative model of a Fukunaga benchmark set (`set_id` 1 or 2).
pub fn fukunaga_pair(set_id: u32) -> Result<ClassPair> {
    let idx = match set_id {
        1 | 2 => set_id as usize - 1,
        _ => return Err(invalid(format!("unknown Fukunaga set {set_id} (expected 1 or 2)"))),
    };
    let f0 = Gaussian::diagonal(&[0.0; 8], &[1.0; 8])?;
    let f1 = Gaussian::diagonal(&FUKUNAGA_MEAN1[idx], &FUKUNAGA_VAR1[idx])?;
    ClassPair::new(ClassDistribution::Gaussian(f0), ClassDistribution::Gaussian(f1), 0.5)
}

/// Balanced Fukunaga dataset with `n_total / 2` points per class.
pub fn make_fukunaga_dataset(set_id: u32, n_total: usize, seed: u64) -> Result<LabeledDataset> {
    let pair = fukunaga_pair(set_id)?;
    balanced_dataset(&pair, n_total / 2, seed)
}
