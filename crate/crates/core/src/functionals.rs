//! Posterior mapping functions `g(eta)`.
//!
//! A density functional of the form `G(f0, f1) = E[g(eta(x))]`, with the
//! expectation over the pooled density `p0 f0 + p1 f1` and `eta` the class-1
//! posterior, is fully described by its mapping function `g`. Any
//! f-divergence `D_phi(f0, f1) = E_f1[phi(f0 / f1)]` maps to
//! `g(eta) = (eta / p1) phi(p1 (1 - eta) / (p0 eta))`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Built-in functional families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFamily {
    /// Squared Hellinger distance `1/2 int (sqrt f0 - sqrt f1)^2`.
    #[serde(alias = "hellinger")]
    HellingerSq,
    /// `KL(f0 || f1)`.
    Kl01,
    /// `KL(f1 || f0)`.
    Kl10,
    /// The `D_p` divergence.
    Dp,
    /// Bayes error rate, `g = min(eta, 1 - eta)`.
    Ber,
    /// f-divergence from a user-supplied convex `phi`.
    GenericPhi,
    /// Arbitrary user-supplied `g`.
    Custom,
}

impl MapFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::HellingerSq => "hellinger",
            Self::Kl01 => "kl01",
            Self::Kl10 => "kl10",
            Self::Dp => "dp",
            Self::Ber => "ber",
            Self::GenericPhi => "generic_phi",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for MapFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hellinger" | "hellinger_sq" | "hellinger2" => Ok(Self::HellingerSq),
            "kl01" | "kl" => Ok(Self::Kl01),
            "kl10" => Ok(Self::Kl10),
            "dp" | "d_p" => Ok(Self::Dp),
            "ber" => Ok(Self::Ber),
            other => Err(invalid(format!("unknown functional `{other}` (expected hellinger, kl01, kl10, dp or ber)"))),
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    HellingerSq,
    Kl01,
    Kl10,
    Dp,
    Ber,
    Phi(ScalarFn),
    Custom(&'static str, ScalarFn),
}

/// An evaluable posterior mapping function with its class priors.
#[derive(Clone)]
pub struct PosteriorMap {
    kind: Kind,
    p0: f64,
    p1: f64,
}

impl fmt::Debug for PosteriorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            Kind::Custom(name, _) => name,
            _ => self.family().name(),
        };
        f.debug_struct("PosteriorMap").field("family", &name).field("p0", &self.p0).field("p1", &self.p1).finish()
    }
}

fn check_priors(p0: f64, p1: f64) -> Result<()> {
    if p0 > 0.0 && p1 > 0.0 && (p0 + p1 - 1.0).abs() <= 1e-12 {
        Ok(())
    } else {
        Err(invalid(format!("priors ({p0}, {p1}) must be positive and sum to 1")))
    }
}

fn domain_err(eta: f64, domain: &'static str) -> Error {
    Error::Domain { what: "eta", value: eta, domain }
}

impl PosteriorMap {
    fn with_priors(kind: Kind, p0: f64, p1: f64) -> Result<Self> {
        check_priors(p0, p1)?;
        Ok(Self { kind, p0, p1 })
    }

    /// `g_H(eta) = 1/2 (sqrt(eta / p1) - sqrt((1 - eta) / p0))^2`.
    pub fn hellinger_sq(p0: f64, p1: f64) -> Result<Self> {
        Self::with_priors(Kind::HellingerSq, p0, p1)
    }

    /// `g(eta) = ((1 - eta) / p0) ln(p1 (1 - eta) / (p0 eta))`, singular at 0.
    pub fn kl01(p0: f64, p1: f64) -> Result<Self> {
        Self::with_priors(Kind::Kl01, p0, p1)
    }

    /// `g(eta) = (eta / p1) ln(p0 eta / (p1 (1 - eta)))`, singular at 1.
    pub fn kl10(p0: f64, p1: f64) -> Result<Self> {
        Self::with_priors(Kind::Kl10, p0, p1)
    }

    /// `g(eta) = ((2 eta - 1)^2 - (2 p0 - 1)^2) / (4 p0 (1 - p0))`.
    pub fn dp(p0: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::Domain { what: "p0", value: p0, domain: "(0, 1)" });
        }
        Self::with_priors(Kind::Dp, p0, 1.0 - p0)
    }

    /// `g(eta) = min(eta, 1 - eta)`; the priors are implicit in `eta`.
    pub fn ber() -> Self {
        Self { kind: Kind::Ber, p0: 0.5, p1: 0.5 }
    }

    /// The f-divergence with generator `phi`. Convexity is not checked.
    pub fn from_phi<F>(phi: F, p0: f64, p1: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::with_priors(Kind::Phi(Arc::new(phi)), p0, p1)
    }

    /// A direct `g(eta)`; priors are recorded as `(0.5, 0.5)`.
    pub fn custom<F>(name: &'static str, g: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { kind: Kind::Custom(name, Arc::new(g)), p0: 0.5, p1: 0.5 }
    }

    /// Built-in family by name with the given priors.
    pub fn from_family(family: MapFamily, p0: f64, p1: f64) -> Result<Self> {
        match family {
            MapFamily::HellingerSq => Self::hellinger_sq(p0, p1),
            MapFamily::Kl01 => Self::kl01(p0, p1),
            MapFamily::Kl10 => Self::kl10(p0, p1),
            MapFamily::Dp => {
                check_priors(p0, p1)?;
                Self::dp(p0)
            }
            MapFamily::Ber => Ok(Self::ber()),
            MapFamily::GenericPhi | MapFamily::Custom => {
                Err(invalid(format!("`{family}` cannot be constructed by name")))
            }
        }
    }

    pub fn family(&self) -> MapFamily {
        match self.kind {
            Kind::HellingerSq => MapFamily::HellingerSq,
            Kind::Kl01 => MapFamily::Kl01,
            Kind::Kl10 => MapFamily::Kl10,
            Kind::Dp => MapFamily::Dp,
            Kind::Ber => MapFamily::Ber,
            Kind::Phi(_) => MapFamily::GenericPhi,
            Kind::Custom(..) => MapFamily::Custom,
        }
    }

    pub fn priors(&self) -> (f64, f64) {
        (self.p0, self.p1)
    }

    /// Evaluates `g(eta)`, rejecting `eta` outside `[0, 1]` and points where
    /// `g` is not finite.
    pub fn eval(&self, eta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(domain_err(eta, "[0, 1]"));
        }
        let (p0, p1) = (self.p0, self.p1);
        let v = match &self.kind {
            Kind::HellingerSq => {
                let d = (eta / p1).sqrt() - ((1.0 - eta) / p0).sqrt();
                0.5 * d * d
            }
            Kind::Kl01 => {
                if eta == 0.0 {
                    return Err(domain_err(eta, "(0, 1] (KL(f0||f1) mapping is singular at 0)"));
                }
                if eta == 1.0 {
                    0.0
                } else {
                    (1.0 - eta) / p0 * (p1 * (1.0 - eta) / (p0 * eta)).ln()
                }
            }
            Kind::Kl10 => {
                if eta == 1.0 {
                    return Err(domain_err(eta, "[0, 1) (KL(f1||f0) mapping is singular at 1)"));
                }
                if eta == 0.0 {
                    0.0
                } else {
                    eta / p1 * (p0 * eta / (p1 * (1.0 - eta))).ln()
                }
            }
            Kind::Dp => {
                let a = 2.0 * eta - 1.0;
                let b = 2.0 * p0 - 1.0;
                (a * a - b * b) / (4.0 * p0 * p1)
            }
            Kind::Ber => eta.min(1.0 - eta),
            Kind::Phi(phi) => {
                if eta == 0.0 {
                    return Err(domain_err(eta, "(0, 1] (f-divergence adapter divides by eta)"));
                }
                let t = p1 * (1.0 - eta) / (p0 * eta);
                eta / p1 * phi(t)
            }
            Kind::Custom(_, g) => g(eta),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain_err(eta, "points where g is finite"))
        }
    }

    /// `g` at every grid point.
    pub fn eval_grid(&self, grid: &PosteriorGrid) -> Result<Vec<f64>> {
        grid.etas().iter().map(|&e| self.eval(e)).collect()
    }

    /// The generator `phi` of a built-in family, when it has one.
    pub fn phi(&self) -> Option<ScalarFnRef> {
        let (p0, p1) = (self.p0, self.p1);
        let f: ScalarFn = match &self.kind {
            Kind::HellingerSq => Arc::new(phi::hellinger_sq),
            Kind::Kl01 => Arc::new(phi::kl01),
            Kind::Kl10 => Arc::new(phi::kl10),
            Kind::Dp => Arc::new(move |t| phi::dp(t, p0, p1)),
            Kind::Ber => Arc::new(move |t| phi::ber(t, p0, p1)),
            Kind::Phi(f) => f.clone(),
            Kind::Custom(..) => return None,
        };
        Some(ScalarFnRef(f))
    }
}

/// Shared handle to a scalar function.
#[derive(Clone)]
pub struct ScalarFnRef(ScalarFn);

impl ScalarFnRef {
    pub fn call(&self, t: f64) -> f64 {
        (self.0)(t)
    }

    pub fn into_inner(self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        self.0
    }
}

/// f-divergence generators, `D_phi(f0, f1) = int phi(f0 / f1) f1`.
pub mod phi {
    pub fn hellinger_sq(t: f64) -> f64 {
        let d = t.sqrt() - 1.0;
        0.5 * d * d
    }

    /// `t ln t`, giving `KL(f0 || f1)`.
    pub fn kl01(t: f64) -> f64 {
        if t == 0.0 {
            0.0
        } else {
            t * t.ln()
        }
    }

    /// `-ln t`, giving `KL(f1 || f0)`.
    pub fn kl10(t: f64) -> f64 {
        -t.ln()
    }

    pub fn total_variation(t: f64) -> f64 {
        0.5 * (t - 1.0).abs()
    }

    /// Generator of the `D_p` divergence for priors `(p0, p1)`.
    pub fn dp(t: f64, p0: f64, p1: f64) -> f64 {
        let s = p1 + p0 * t;
        let a = p0 * t - p1;
        let b = 2.0 * p0 - 1.0;
        (a * a / s - b * b * s) / (4.0 * p0 * p1)
    }

    /// `min(p1, p0 t)`, giving the Bayes error rate.
    pub fn ber(t: f64, p0: f64, p1: f64) -> f64 {
        p1.min(p0 * t)
    }
}

/// Which default grid to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// `{0, 0.01, ..., 1}`.
    #[default]
    Standard,
    /// `{1e-4, 0.01, ..., 0.99, 1 - 1e-4}`.
    KlClipped,
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "kl_clipped" | "kl-clipped" => Ok(Self::KlClipped),
            other => Err(invalid(format!("unknown grid `{other}` (expected standard or kl_clipped)"))),
        }
    }
}

/// Endpoint clip of the KL grid.
pub const KL_EPSILON: f64 = 1e-4;

/// Strictly increasing posterior values in `[0, 1]` on which `g` is fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    etas: Vec<f64>,
    epsilon: Option<f64>,
}

impl PosteriorGrid {
    pub fn new(etas: Vec<f64>) -> Result<Self> {
        if etas.is_empty() {
            return Err(invalid("posterior grid is empty"));
        }
        if etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(invalid("posterior grid values must lie in [0, 1]"));
        }
        if etas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("posterior grid must be strictly increasing"));
        }
        Ok(Self { etas, epsilon: None })
    }

    /// `n` equally spaced points from 0 to 1 inclusive.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("a uniform grid needs at least two points"));
        }
        Self::new((0..n).map(|i| i as f64 / (n - 1) as f64).collect())
    }

    pub fn standard() -> Self {
        Self::uniform(101).expect("static grid")
    }

    pub fn kl_clipped() -> Self {
        let mut g = Self::standard();
        g.etas[0] = KL_EPSILON;
        g.etas[100] = 1.0 - KL_EPSILON;
        g.epsilon = Some(KL_EPSILON);
        g
    }

    pub fn from_kind(kind: GridKind) -> Self {
        match kind {
            GridKind::Standard => Self::standard(),
            GridKind::KlClipped => Self::kl_clipped(),
        }
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    /// Forward spacings `eta[i+1] - eta[i]`; the last point reuses the
    /// trailing spacing.
    pub fn spacings(&self) -> Vec<f64> {
        let n = self.etas.len();
        if n == 1 {
            return vec![1.0];
        }
        let mut d: Vec<f64> = self.etas.windows(2).map(|w| w[1] - w[0]).collect();
        d.push(d[n - 2]);
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn hellinger_values() {
        let g = PosteriorMap::hellinger_sq(0.5, 0.5).unwrap();
        assert_eq!(g.eval(0.5).unwrap(), 0.0);
        assert!(close(g.eval(0.0).unwrap(), 1.0, 1e-15));
        let g = PosteriorMap::hellinger_sq(0.25, 0.75).unwrap();
        assert!(close(g.eval(0.75).unwrap(), 0.0, 1e-15));
        // Equal priors reduce to (sqrt(eta) - sqrt(1 - eta))^2.
        let g = PosteriorMap::hellinger_sq(0.5, 0.5).unwrap();
        for eta in [0.1, 0.3, 0.9] {
            let want = (f64::sqrt(eta) - f64::sqrt(1.0 - eta)).powi(2);
            assert!(close(g.eval(eta).unwrap(), want, 1e-14));
        }
    }

    #[test]
    fn kl_values_and_singularities() {
        let g0 = PosteriorMap::kl01(0.5, 0.5).unwrap();
        let g1 = PosteriorMap::kl10(0.5, 0.5).unwrap();
        for i in 1..100 {
            let eta = i as f64 / 100.0;
            assert!(close(g1.eval(eta).unwrap(), g0.eval(1.0 - eta).unwrap(), 1e-12));
        }
        assert!(g0.eval(1.0 - 1e-12).unwrap().abs() < 1e-9);
        assert_eq!(g0.eval(0.5).unwrap(), 0.0);
        assert_eq!(g1.eval(0.5).unwrap(), 0.0);
        assert!(g0.eval(0.0).is_err());
        assert!(g1.eval(1.0).is_err());
        assert_eq!(g0.eval(1.0).unwrap(), 0.0);
        assert_eq!(g1.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn dp_values() {
        let g = PosteriorMap::dp(0.5).unwrap();
        assert_eq!(g.eval(0.0).unwrap(), 1.0);
        assert_eq!(g.eval(0.5).unwrap(), 0.0);
        assert_eq!(g.eval(1.0).unwrap(), 1.0);
        assert!(close(g.eval(0.75).unwrap(), 0.25, 1e-15));
        for p0 in [0.1, 0.3, 0.8] {
            let g = PosteriorMap::dp(p0).unwrap();
            assert!(g.eval(1.0 - p0).unwrap().abs() < 1e-14);
        }
        assert!(PosteriorMap::dp(0.0).is_err());
        assert!(PosteriorMap::dp(1.0).is_err());
    }

    #[test]
    fn ber_values() {
        let g = PosteriorMap::ber();
        assert_eq!(g.eval(0.5).unwrap(), 0.5);
        assert_eq!(g.eval(0.0).unwrap(), 0.0);
        assert_eq!(g.eval(1.0).unwrap(), 0.0);
        assert_eq!(g.eval(0.2).unwrap(), 0.2);
    }

    #[test]
    fn out_of_range_eta_rejected() {
        let g = PosteriorMap::ber();
        assert!(g.eval(-0.01).is_err());
        assert!(g.eval(1.01).is_err());
        assert!(g.eval(f64::NAN).is_err());
    }

    #[test]
    fn affine_phi_gives_zero_divergence_map() {
        let (p0, p1) = (0.3, 0.7);
        let g = PosteriorMap::from_phi(|t| t - 1.0, p0, p1).unwrap();
        for i in 1..=10 {
            let eta = i as f64 / 10.0;
            let want = eta / p1 * (p1 * (1.0 - eta) / (p0 * eta) - 1.0);
            assert!(close(g.eval(eta).unwrap(), want, 1e-14));
        }
        assert!(g.eval(0.0).is_err());
    }

    #[test]
    fn total_variation_adapter() {
        let g = PosteriorMap::from_phi(phi::total_variation, 0.5, 0.5).unwrap();
        for i in 1..=10 {
            let eta = i as f64 / 10.0 - 0.05;
            assert!(close(g.eval(eta).unwrap(), (1.0 - 2.0 * eta).abs(), 1e-14));
        }
    }

    #[test]
    fn adapter_matches_closed_forms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for (p0, p1) in [(0.5, 0.5), (0.3, 0.7)] {
            let maps = [
                PosteriorMap::hellinger_sq(p0, p1).unwrap(),
                PosteriorMap::kl01(p0, p1).unwrap(),
                PosteriorMap::kl10(p0, p1).unwrap(),
                PosteriorMap::dp(p0).unwrap(),
                PosteriorMap::ber(),
            ];
            for g in &maps {
                let phi = g.phi().unwrap();
                let (gp0, gp1) = g.priors();
                let adapter = PosteriorMap::from_phi(move |t| phi.call(t), gp0, gp1).unwrap();
                for _ in 0..1000 {
                    let eta = rng.random_range(0.001..0.999);
                    let a = adapter.eval(eta).unwrap();
                    let b = g.eval(eta).unwrap();
                    assert!(close(a, b, 1e-10 * (1.0 + b.abs())), "{g:?} at {eta}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn symmetry_and_nonnegativity() {
        let maps = [PosteriorMap::hellinger_sq(0.5, 0.5).unwrap(), PosteriorMap::dp(0.5).unwrap(), PosteriorMap::ber()];
        for g in &maps {
            for i in 0..=100 {
                let eta = i as f64 / 100.0;
                let a = g.eval(eta).unwrap();
                assert!(close(a, g.eval(1.0 - eta).unwrap(), 1e-12));
                assert!(a >= 0.0);
            }
        }
        // The KL mappings are nonnegative only in expectation, not pointwise.
        assert!(PosteriorMap::kl01(0.5, 0.5).unwrap().eval(0.9).unwrap() < 0.0);
        let g = PosteriorMap::hellinger_sq(0.2, 0.8).unwrap();
        assert!(PosteriorGrid::standard().etas().iter().all(|&e| g.eval(e).unwrap() >= 0.0));
    }

    #[test]
    fn default_grids() {
        let s = PosteriorGrid::standard();
        assert_eq!(s.len(), 101);
        assert_eq!(s.etas()[0], 0.0);
        assert_eq!(s.etas()[100], 1.0);
        let k = PosteriorGrid::kl_clipped();
        assert_eq!(k.len(), 101);
        assert_eq!(k.etas()[0], 1e-4);
        assert_eq!(k.etas()[100], 0.9999);
        assert_eq!(k.epsilon(), Some(1e-4));
        for g in [s, k] {
            assert!(g.etas().windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn grid_validation_and_spacing() {
        assert!(PosteriorGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(PosteriorGrid::new(vec![0.0, 1.5]).is_err());
        let g = PosteriorGrid::new(vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(g.spacings(), vec![0.25, 0.75, 0.75]);
    }

    #[test]
    fn family_names_round_trip() {
        for f in [MapFamily::HellingerSq, MapFamily::Kl01, MapFamily::Kl10, MapFamily::Dp, MapFamily::Ber] {
            assert_eq!(f.name().parse::<MapFamily>().unwrap(), f);
        }
        assert!("renyi".parse::<MapFamily>().is_err());
    }
}
