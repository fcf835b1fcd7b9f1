use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Isotropic Gaussian density `N(mean, tau^2 I_d)`, used through its
/// L2-normalized version `f = p / ||p||`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianAtom {
    pub mean: Vec<f64>,
    pub tau: f64,
}

impl GaussianAtom {
    pub fn new(mean: Vec<f64>, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be positive and finite, got {tau}")));
        }
        if mean.is_empty() {
            return Err(invalid("mean", "must have at least one coordinate"));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(invalid("mean", "coordinates must be finite"));
        }
        Ok(Self { mean, tau })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `||p||` for the unnormalized density: `(4 pi tau^2)^(-d/4)`.
    pub fn density_norm(&self) -> f64 {
        (4.0 * PI * self.tau * self.tau).powf(-(self.dim() as f64) / 4.0)
    }

    /// `sup |f| = f(mean) = (pi tau^2)^(-d/4)` for the normalized atom.
    pub fn sup_norm(&self) -> f64 {
        (PI * self.tau * self.tau).powf(-(self.dim() as f64) / 4.0)
    }

    pub(crate) fn sq_dist(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(x)
            .map(|(m, v)| (v - m) * (v - m))
            .sum()
    }

    /// The probability density `p(x)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        let d = self.dim() as f64;
        let t2 = self.tau * self.tau;
        (2.0 * PI * t2).powf(-d / 2.0) * (-self.sq_dist(x) / (2.0 * t2)).exp()
    }

    /// The normalized atom `f(x) = p(x) / ||p||`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.sup_norm() * (-self.sq_dist(x) / (2.0 * self.tau * self.tau)).exp()
    }
}

/// `<f_a, f_b>` for two normalized Gaussian atoms.
///
/// The product integral of two Gaussians is the density of
/// `N(0, (tau_a^2 + tau_b^2) I)` at `mu_a - mu_b`; for equal scales this
/// collapses to `exp(-|mu_a - mu_b|^2 / (4 tau^2))`.
pub fn inner_product(a: &GaussianAtom, b: &GaussianAtom) -> f64 {
    let sq: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    if a.tau == b.tau {
        return (-sq / (4.0 * a.tau * a.tau)).exp();
    }
    let d = a.dim() as f64;
    let s2 = a.tau * a.tau + b.tau * b.tau;
    let product = (2.0 * PI * s2).powf(-d / 2.0) * (-sq / (2.0 * s2)).exp();
    product / (a.density_norm() * b.density_norm())
}
