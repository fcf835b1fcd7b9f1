use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, GaussianAtom};
use crate::error::{invalid, Result};
use crate::objective::empirical_loss;
use crate::optimizer::SolverSettings;
use crate::sample::SampleSet;
use crate::tuning::{gbm_path, top_level, TuningPath};

/// Points on a thick circle: uniform angle, radius `N(radius, thickness^2)`.
pub fn sample_circle(n: usize, seed: u64, radius: f64, thickness: f64) -> Result<SampleSet> {
    if !(radius > 0.0) || !(thickness >= 0.0) {
        return Err(invalid("circle", "radius must be positive and thickness nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let theta = rng.random_range(0.0..TAU);
        let z: f64 = StandardNormal.sample(&mut rng);
        let rho = radius + thickness * z;
        data.push(rho * theta.cos());
        data.push(rho * theta.sin());
    }
    Ok(SampleSet::from_flat_unchecked(2, data))
}

/// Scans the sample in order and keeps a point when it lies at least
/// `min_dist` from every point kept so far.
pub fn greedy_centers(sample: &SampleSet, min_dist: f64) -> Result<Vec<Vec<f64>>> {
    if !(min_dist > 0.0) {
        return Err(invalid("min_dist", "must be positive"));
    }
    let sq = min_dist * min_dist;
    let mut centers: Vec<&[f64]> = Vec::new();
    for p in sample.iter() {
        let far = centers
            .iter()
            .all(|c| c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= sq);
        if far {
            centers.push(p);
        }
    }
    Ok(centers.into_iter().map(<[f64]>::to_vec).collect())
}

/// Isotropic Gaussian atoms with scale `tau` at the given centers.
pub fn centers_dictionary(centers: &[Vec<f64>], tau: f64) -> Result<Dictionary> {
    let atoms = centers
        .iter()
        .map(|c| GaussianAtom::new(c.clone(), tau))
        .collect::<Result<Vec<_>>>()?;
    Dictionary::gaussian(atoms)
}

/// `k -> gamma_hat(lambda_hat^k) - gamma_0` along the bisection path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessLossCurve {
    /// `k -> (w_k, gamma_hat(lambda_hat^k))`.
    pub losses: BTreeMap<usize, (f64, f64)>,
    pub gamma_0: f64,
    pub fit_count: usize,
}

impl ExcessLossCurve {
    pub fn excess(&self, k: usize) -> Option<f64> {
        self.losses.get(&k).map(|(_, l)| l - self.gamma_0)
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.losses.iter().map(|(&k, &(w, l))| (k, w, l - self.gamma_0))
    }

    /// Excess loss at the largest discovered size `<= k`, divided by the
    /// excess loss at the smallest discovered size `>= 1`.
    pub fn residual_fraction(&self, k: usize) -> Option<f64> {
        let (_, first) = self.losses.range(1..).next()?;
        let (_, at) = self.losses.range(1..=k).next_back()?;
        let total = first.1 - self.gamma_0;
        (total > 0.0).then(|| (at.1 - self.gamma_0) / total)
    }
}

/// Runs the bisection path on the full sample and evaluates the empirical
/// loss of each path fit.
pub fn excess_loss_curve(
    sample: &SampleSet,
    dict: &Dictionary,
    settings: &SolverSettings,
    alpha_rel: f64,
) -> Result<(ExcessLossCurve, TuningPath)> {
    let moments = dict.empirical_moments(sample)?;
    let path = gbm_path(&moments, dict.gram(), settings, alpha_rel * top_level(&moments))?;
    let losses: BTreeMap<usize, (f64, f64)> = path
        .fits
        .iter()
        .map(|(&k, fit)| (k, (path.entries[&k], empirical_loss(&fit.lambda_hat, &moments, dict.gram()))))
        .collect();
    let gamma_0 = losses.values().map(|v| v.1).fold(f64::INFINITY, f64::min);
    Ok((
        ExcessLossCurve {
            losses,
            gamma_0,
            fit_count: path.fit_count,
        },
        path,
    ))
}
