use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{invalid, Result, SpadesError};
use crate::objective::Coefficients;
use crate::sample::SampleSet;

/// A finite Gaussian mixture whose components are atoms of a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTruth {
    /// `I*`, sorted.
    pub component_indices: Vec<usize>,
    /// Mixture probabilities `lambda_bar_j`, aligned with `component_indices`.
    pub weights: Vec<f64>,
    /// `lambda*_j = lambda_bar_j ||p_j||` over the whole dictionary, so that
    /// `sum_j lambda*_j f_j` is the mixture density.
    pub normalized_weights: Coefficients,
}

impl MixtureTruth {
    pub fn new(dict: &Dictionary, component_indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let atoms = dict.gaussian_atoms().ok_or(SpadesError::WrongDictionaryKind {
            expected: "gaussian",
        })?;
        if component_indices.is_empty() || component_indices.len() != weights.len() {
            return Err(invalid("weights", "need one positive weight per component"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(invalid("weights", "mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("weights", format!("must sum to 1, got {total}")));
        }
        let mut order: Vec<usize> = (0..component_indices.len()).collect();
        order.sort_by_key(|&i| component_indices[i]);
        let component_indices: Vec<usize> = order.iter().map(|&i| component_indices[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
        if component_indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("component_indices", "duplicate component"));
        }
        let mut star = Coefficients::zeros(dict.len());
        for (&j, &w) in component_indices.iter().zip(&weights) {
            if j >= dict.len() {
                return Err(SpadesError::IndexOutOfRange {
                    index: j,
                    size: dict.len(),
                });
            }
            star.0[j] = w * atoms[j].density_norm();
        }
        Ok(Self {
            component_indices,
            weights,
            normalized_weights: star,
        })
    }

    /// The first `k_star` atoms with equal weights `1/k_star`.
    pub fn equal_first(dict: &Dictionary, k_star: usize) -> Result<Self> {
        if k_star == 0 {
            return Err(invalid("k_star", "must be at least 1"));
        }
        Self::new(dict, (0..k_star).collect(), vec![1.0 / k_star as f64; k_star])
    }

    pub fn k_star(&self) -> usize {
        self.component_indices.len()
    }

    /// `sum_j lambda_bar_j p_j(x)`.
    pub fn density(&self, dict: &Dictionary, x: &[f64]) -> Result<f64> {
        let atoms = dict.gaussian_atoms().ok_or(SpadesError::WrongDictionaryKind {
            expected: "gaussian",
        })?;
        Ok(self
            .component_indices
            .iter()
            .zip(&self.weights)
            .map(|(&j, w)| w * atoms[j].density(x))
            .sum())
    }
}

/// Draws `n` points: a component from the mixture probabilities, then a
/// point from that Gaussian.
pub fn sample_mixture(truth: &MixtureTruth, dict: &Dictionary, n: usize, seed: u64) -> Result<SampleSet> {
    let atoms = dict.gaussian_atoms().ok_or(SpadesError::WrongDictionaryKind {
        expected: "gaussian",
    })?;
    let d = dict.dim();
    if n == 0 {
        return Ok(SampleSet::empty(d));
    }
    let pick = WeightedIndex::new(&truth.weights).map_err(|e| invalid("weights", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let atom = &atoms[truth.component_indices[pick.sample(&mut rng)]];
        for mu in &atom.mean {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(mu + atom.tau * z);
        }
    }
    Ok(SampleSet::from_flat_unchecked(d, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::GaussianAtom;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_matches_density() {
        let d = Dictionary::gaussian_grid(6, 4.0, 1.0).unwrap();
        let t = MixtureTruth::equal_first(&d, 2).unwrap();
        assert_relative_eq!(t.normalized_weights.0[0], 0.5 * 0.531_125_966_013_598_5, epsilon = 1e-12);
        for x in [-1.0, 3.3, 4.0, 6.1, 9.5] {
            let direct = t.density(&d, &[x]).unwrap();
            let via = d.combination_at(t.normalized_weights.as_slice(), &[x]);
            assert!((direct - via).abs() <= 1e-10);
        }
    }

    #[test]
    fn rejects_bad_truths() {
        let d = Dictionary::gaussian_grid(4, 4.0, 1.0).unwrap();
        assert!(MixtureTruth::new(&d, vec![0, 1], vec![0.5, 0.6]).is_err());
        assert!(MixtureTruth::new(&d, vec![0, 0], vec![0.5, 0.5]).is_err());
        assert!(MixtureTruth::new(&d, vec![0, 9], vec![0.5, 0.5]).is_err());
        assert!(MixtureTruth::new(&d, vec![0], vec![]).is_err());
        let h = Dictionary::haar(2).unwrap();
        assert!(matches!(
            MixtureTruth::equal_first(&h, 1),
            Err(SpadesError::WrongDictionaryKind { .. })
        ));
    }

    #[test]
    fn sampler_is_seeded() {
        let d = Dictionary::gaussian_grid(5, 4.0, 1.0).unwrap();
        let t = MixtureTruth::equal_first(&d, 2).unwrap();
        let a = sample_mixture(&t, &d, 50, 7).unwrap();
        assert_eq!(a, sample_mixture(&t, &d, 50, 7).unwrap());
        assert_ne!(a, sample_mixture(&t, &d, 50, 8).unwrap());
        assert!(sample_mixture(&t, &d, 0, 7).unwrap().is_empty());
    }

    #[test]
    fn single_component_mean() {
        let d = Dictionary::gaussian(vec![GaussianAtom::new(vec![3.0, -1.0], 0.5).unwrap()]).unwrap();
        let t = MixtureTruth::equal_first(&d, 1).unwrap();
        let n = 10_000;
        let s = sample_mixture(&t, &d, n, 1).unwrap();
        let bound = 4.0 * 0.5 / (n as f64).sqrt();
        for (axis, mu) in [3.0, -1.0].iter().enumerate() {
            let mean = s.iter().map(|p| p[axis]).sum::<f64>() / n as f64;
            assert!((mean - mu).abs() < bound, "axis {axis}: {mean}");
        }
    }

    #[test]
    fn component_counts_within_binomial_band() {
        let d = Dictionary::gaussian_grid(2, 40.0, 1.0).unwrap();
        let t = MixtureTruth::equal_first(&d, 2).unwrap();
        let n = 2000;
        let s = sample_mixture(&t, &d, n, 3).unwrap();
        let first = s.iter().filter(|p| p[0] < 60.0).count();
        // 99% band of Binomial(2000, 1/2): 943..=1057.
        assert!((943..=1057).contains(&first), "{first}");
    }
}
