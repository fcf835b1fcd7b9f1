//! Coherence diagnostics and the right-hand sides of the oracle
//! inequalities, for checking the guarantees on simulated data.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Atoms, Dictionary, Gram};
use crate::error::{invalid, Result};
use crate::objective::{mixture_sup_bound, rate_r, selection_rate, Coefficients, WeightSpec};

/// Normalized correlation `<f_i, f_j> / (||f_i|| ||f_j||)`.
pub fn correlation(gram: &Gram, i: usize, j: usize) -> f64 {
    gram.get(i, j) / (gram.get(i, i) * gram.get(j, j)).sqrt()
}

/// Smallest eigenvalue of the Gram matrix.
pub fn min_eigenvalue(gram: &Gram) -> f64 {
    SymmetricEigen::new(gram.matrix().clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Number of nonzero entries `Psi(i, j)` with `i > j`.
pub fn sparsity_index(gram: &Gram) -> usize {
    let m = gram.dim();
    (0..m)
        .map(|i| (0..i).filter(|&j| gram.get(i, j) != 0.0).count())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceFlags {
    pub mutcoh_ok: bool,
    pub cumcoh_ok: bool,
    pub corollary1_ok: bool,
    pub positive_definite: bool,
}

/// Coherence quantities of a dictionary relative to the support of one
/// coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// `max_{i in J} max_{j != i} |rho(i, j)|`.
    pub rho_max: f64,
    /// `sum_{i in J} sum_{j > i} |rho(i, j)|`.
    pub rho_star_cumulative: f64,
    /// `max_{j in J} omega_j / (r ||f_j||)` with `r = r(delta/2)`.
    #[serde(rename = "F")]
    pub f: f64,
    /// `max_j r ||f_j|| / omega_j`.
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "N")]
    pub n_sparsity: usize,
    pub kappa_m: f64,
    pub m_lambda: usize,
    pub flags: CoherenceFlags,
}

impl CoherenceReport {
    pub fn mutcoh_value(&self) -> f64 {
        16.0 * self.g * self.f * self.rho_max * self.m_lambda as f64
    }

    pub fn cumcoh_value(&self) -> f64 {
        16.0 * self.f * self.g * self.rho_star_cumulative * (self.m_lambda as f64).sqrt()
    }

    pub fn corollary1_value(&self) -> f64 {
        16.0 * self.f * self.n_sparsity as f64 * (self.m_lambda as f64).sqrt()
    }
}

fn check_lengths(gram: &Gram, lambda: &Coefficients, weights: &WeightSpec) -> Result<()> {
    let m = gram.dim();
    if lambda.len() != m || weights.len() != m {
        return Err(crate::SpadesError::DimensionMismatch {
            expected: m,
            got: if lambda.len() != m { lambda.len() } else { weights.len() },
        });
    }
    Ok(())
}

/// Computes the coherence report for the support of `lambda`, where `n` is
/// the sample size the weights were calibrated for.
pub fn coherence_report(
    gram: &Gram,
    lambda: &Coefficients,
    weights: &WeightSpec,
    delta: f64,
    n: usize,
) -> Result<CoherenceReport> {
    check_lengths(gram, lambda, weights)?;
    let m = gram.dim();
    let r = rate_r(m, n, delta / 2.0)?;
    let support = lambda.support();
    let norm = |j: usize| gram.get(j, j).sqrt();

    let mut rho_max = 0.0f64;
    let mut rho_star = 0.0;
    for &i in &support {
        for j in 0..m {
            if j == i {
                continue;
            }
            let c = correlation(gram, i, j).abs();
            rho_max = rho_max.max(c);
            if j > i {
                rho_star += c;
            }
        }
    }
    let f = support
        .iter()
        .map(|&j| weights.omega[j] / (r * norm(j)))
        .fold(0.0, f64::max);
    let g = (0..m)
        .map(|j| r * norm(j) / weights.omega[j])
        .fold(0.0, f64::max);
    let kappa_m = min_eigenvalue(gram);
    let mut report = CoherenceReport {
        rho_max,
        rho_star_cumulative: rho_star,
        f,
        g,
        n_sparsity: sparsity_index(gram),
        kappa_m,
        m_lambda: support.len(),
        flags: CoherenceFlags {
            mutcoh_ok: true,
            cumcoh_ok: true,
            corollary1_ok: true,
            positive_definite: kappa_m > 0.0,
        },
    };
    if !support.is_empty() {
        report.flags.mutcoh_ok = report.mutcoh_value() <= 1.0;
        report.flags.cumcoh_ok = report.cumcoh_value() <= 1.0;
        report.flags.corollary1_ok = report.corollary1_value() <= 1.0;
    }
    Ok(report)
}

/// Identifiability and signal-strength conditions for a mixture truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConditions {
    /// `rho(lambda*)`, the maximal local coherence on the true support.
    pub rho_star: f64,
    pub k_star: usize,
    pub condition_a_ok: bool,
    pub min_weight: f64,
    pub condition_b_threshold: f64,
    pub condition_b_ok: bool,
    #[serde(rename = "L")]
    pub l: f64,
    pub r: f64,
    /// Smallest distance between two atom means; absent for Haar atoms.
    pub d_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub separation_ok: bool,
}

impl MixtureConditions {
    pub fn condition_a_holds(rho_star: f64, k_star: usize) -> bool {
        k_star == 0 || rho_star <= 1.0 / (16.0 * k_star as f64)
    }

    pub fn condition_b_bound(r: f64, l: f64) -> f64 {
        4.0 * (2f64.sqrt() + 1.0) * r * l
    }

    /// `D_min^2 >= 4 tau_max^2 log(16 k*)`.
    pub fn separation_holds(d_min: f64, tau_max: f64, k_star: usize) -> bool {
        k_star <= 1 || d_min * d_min >= 4.0 * tau_max * tau_max * (16.0 * k_star as f64).ln()
    }
}

/// Evaluates the mixture conditions for the truth `lambda_star` in
/// normalized-atom coordinates.
pub fn check_conditions_mixture(
    dict: &Dictionary,
    lambda_star: &Coefficients,
    n: usize,
    delta: f64,
) -> Result<MixtureConditions> {
    let m = dict.len();
    if lambda_star.len() != m {
        return Err(crate::SpadesError::DimensionMismatch {
            expected: m,
            got: lambda_star.len(),
        });
    }
    let gram = dict.gram();
    let support = lambda_star.support();
    let rho_star = support
        .iter()
        .flat_map(|&i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| correlation(gram, i, j).abs())
        .fold(0.0, f64::max);
    let k_star = support.len();
    let min_weight = support
        .iter()
        .map(|&j| lambda_star.0[j].abs())
        .fold(f64::INFINITY, f64::min);
    let min_weight = if support.is_empty() { 0.0 } else { min_weight };
    let r = selection_rate(m, n, delta)?;
    let l = mixture_sup_bound(dict.sup_norms());
    let threshold = MixtureConditions::condition_b_bound(r, l);
    let (d_min, tau_max) = match dict.atoms() {
        Atoms::Gaussian { atoms, .. } => {
            let mut d_min = f64::INFINITY;
            for i in 0..atoms.len() {
                for j in 0..i {
                    d_min = d_min.min(atoms[i].sq_dist(&atoms[j].mean).sqrt());
                }
            }
            let tau_max = atoms.iter().map(|a| a.tau).fold(0.0, f64::max);
            (d_min.is_finite().then_some(d_min), Some(tau_max))
        }
        Atoms::Haar { .. } => (None, None),
    };
    let separation_ok = match (d_min, tau_max) {
        (Some(d), Some(t)) => MixtureConditions::separation_holds(d, t, k_star),
        (None, Some(_)) => true,
        _ => false,
    };
    Ok(MixtureConditions {
        rho_star,
        k_star,
        condition_a_ok: MixtureConditions::condition_a_holds(rho_star, k_star),
        min_weight,
        condition_b_threshold: threshold,
        condition_b_ok: min_weight > threshold,
        l,
        r,
        d_min,
        tau_max,
        separation_ok,
    })
}

/// Which oracle inequality to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Under the maximal-local-coherence condition.
    Mutcoh,
    /// Under the cumulative-local-coherence condition.
    Cumcoh,
    /// Under positive definiteness of the Gram matrix.
    Pd,
}

/// Right-hand side of an oracle inequality at the reference coefficients
/// `lambda_ref`. `approx_error` is `||f_lambda_ref - f||^2`.
///
/// The first two variants return
/// `(alpha+1)/(alpha-1) * approx_error + 8 alpha^2/(alpha-1) * F^2 r^2 M(lambda)`
/// with `r = r(delta/2)`; `Pd` returns
/// `(alpha+1)/(alpha-1) * approx_error + 8 alpha^2/(alpha-1) * sum_{J} omega_j^2 / kappa_M`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_bound(
    theorem: Theorem,
    lambda_ref: &Coefficients,
    gram: &Gram,
    weights: &WeightSpec,
    n: usize,
    delta: f64,
    alpha: f64,
    approx_error: f64,
) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(invalid("alpha", format!("must exceed 1, got {alpha}")));
    }
    check_lengths(gram, lambda_ref, weights)?;
    let support = lambda_ref.support();
    let lead = (alpha + 1.0) / (alpha - 1.0) * approx_error;
    let factor = 8.0 * alpha * alpha / (alpha - 1.0);
    let remainder = match theorem {
        Theorem::Mutcoh | Theorem::Cumcoh => {
            let r = rate_r(gram.dim(), n, delta / 2.0)?;
            let f = support
                .iter()
                .map(|&j| weights.omega[j] / (r * gram.get(j, j).sqrt()))
                .fold(0.0, f64::max);
            factor * f * f * r * r * support.len() as f64
        }
        Theorem::Pd => {
            if support.is_empty() {
                0.0
            } else {
                let kappa = min_eigenvalue(gram);
                if !(kappa > 0.0) {
                    return Err(invalid("gram", "Gram matrix is not positive definite"));
                }
                factor * support.iter().map(|&j| weights.omega[j].powi(2)).sum::<f64>() / kappa
            }
        }
    };
    Ok(lead + remainder)
}

/// `(4 sqrt2 / L) k* sqrt(log(2 M^2 / delta) / n)`, the l1 bound on the
/// mixture-weight error.
pub fn corollary2_bound(k_star: usize, l: f64, m: usize, n: usize, delta: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(invalid("L", "must be positive"));
    }
    Ok(4.0 * 2f64.sqrt() / l * k_star as f64 * selection_rate(m, n, delta)?)
}
