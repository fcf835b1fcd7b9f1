//! Empirical L2 loss, weighted l1 penalty and the weight choices that go
//! with them.
//!
//! For coefficients `lambda` the empirical loss is
//! `gamma(lambda) = -2 lambda'c + lambda' Psi lambda`, where `c` holds the
//! empirical means of the atoms and `Psi` is the Gram matrix. It differs from
//! `||f_lambda - f||^2` by the constant `||f||^2` in expectation. The
//! estimator minimizes `gamma(lambda) + 2 sum_j omega_j |lambda_j|`.

use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, EmpiricalMoments, Gram};
use crate::error::{invalid, Result, SpadesError};

/// A coefficient vector over the atoms of a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients(pub Vec<f64>);

impl Coefficients {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn filled(m: usize, value: f64) -> Self {
        Self(vec![value; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Indices of exactly nonzero entries.
    pub fn support(&self) -> Vec<usize> {
        self.support_above(0.0)
    }

    /// Indices `j` with `|lambda_j| > tol`.
    pub fn support_above(&self, tol: f64) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > tol)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    pub fn l1_distance(&self, other: &Coefficients) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl From<Vec<f64>> for Coefficients {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    /// `omega_j = 4 L_j r(delta/2)`.
    Simple,
    /// `2 sqrt2 sigma_j r + (8/3) L_j r^2` with the empirical standard
    /// deviation plugged in for `sigma_j`. Diagnostic only.
    Bernstein,
    /// `2 sqrt2 T_j r + (8/3) L_j r^2`, with
    /// `T_j^2 = (2/n) sum f_j(X_i)^2 + 2 L_j^2 r^2`.
    DataDriven,
    /// The same level `w` for every atom.
    Scalar(f64),
    /// `omega_j = 4 L r` with `L = max(1/sqrt3, max_j L_j)` and the
    /// selection rate `sqrt(log(2M^2/delta)/n)`.
    Mixture,
    /// Per-atom weights supplied by the caller.
    Custom,
}

/// Penalty weights together with how they were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub variant: WeightVariant,
    pub delta: Option<f64>,
    pub omega: Vec<f64>,
}

impl WeightSpec {
    pub fn scalar(w: f64, m: usize) -> Self {
        Self {
            variant: WeightVariant::Scalar(w),
            delta: None,
            omega: vec![w; m],
        }
    }

    /// Arbitrary per-atom weights; every entry must be nonnegative.
    pub fn custom(omega: Vec<f64>) -> Result<Self> {
        if omega.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("omega", "weights must be finite and nonnegative"));
        }
        Ok(Self {
            variant: WeightVariant::Custom,
            delta: None,
            omega,
        })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// `r(M, n, delta) = sqrt(log(M/delta) / n)`.
pub fn rate_r(m: usize, n: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if m == 0 {
        return Err(invalid("M", "must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    Ok(((m as f64 / delta).ln() / n as f64).sqrt())
}

/// The rate used for component selection, `r(M, n, delta/(2M))`,
/// i.e. `sqrt(log(2 M^2 / delta) / n)`.
pub fn selection_rate(m: usize, n: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    rate_r(m, n, delta / (2.0 * m as f64))
}

/// `max(1/sqrt3, max_j L_j)`.
pub fn mixture_sup_bound(sup_norms: &[f64]) -> f64 {
    sup_norms
        .iter()
        .fold(1.0 / 3f64.sqrt(), |acc, &l| acc.max(l))
}

/// Builds penalty weights for `dict` from moments computed on a sample of
/// size `moments.n`.
pub fn make_weights(
    dict: &Dictionary,
    moments: &EmpiricalMoments,
    delta: f64,
    variant: WeightVariant,
) -> Result<WeightSpec> {
    let m = dict.len();
    if moments.len() != m {
        return Err(SpadesError::DimensionMismatch {
            expected: m,
            got: moments.len(),
        });
    }
    if !matches!(variant, WeightVariant::Scalar(_) | WeightVariant::Custom) {
        check_delta(delta)?;
    }
    let n = moments.n;
    let sup = dict.sup_norms();
    let omega: Vec<f64> = match variant {
        WeightVariant::Scalar(w) => {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid("w", format!("scalar weight must be >= 0, got {w}")));
            }
            return Ok(WeightSpec::scalar(w, m));
        }
        WeightVariant::Custom => {
            return Err(invalid("variant", "custom weights are built with WeightSpec::custom"))
        }
        WeightVariant::Simple => {
            let r = rate_r(m, n, delta / 2.0)?;
            sup.iter().map(|l| 4.0 * l * r).collect()
        }
        WeightVariant::Bernstein => {
            let r = rate_r(m, n, delta / 2.0)?;
            sup.iter()
                .zip(&moments.mean)
                .zip(&moments.second_moment)
                .map(|((l, c), q)| {
                    let sigma = (q - c * c).max(0.0).sqrt();
                    2.0 * 2f64.sqrt() * sigma * r + 8.0 / 3.0 * l * r * r
                })
                .collect()
        }
        WeightVariant::DataDriven => {
            let r = rate_r(m, n, delta / 2.0)?;
            sup.iter()
                .zip(&moments.second_moment)
                .map(|(l, q)| {
                    let t = (2.0 * q + 2.0 * l * l * r * r).sqrt();
                    2.0 * 2f64.sqrt() * t * r + 8.0 / 3.0 * l * r * r
                })
                .collect()
        }
        WeightVariant::Mixture => {
            let r = selection_rate(m, n, delta)?;
            let l = mixture_sup_bound(sup);
            vec![4.0 * l * r; m]
        }
    };
    Ok(WeightSpec {
        variant,
        delta: Some(delta),
        omega,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-2 lambda'c + lambda' Psi lambda`.
pub fn empirical_loss(lambda: &Coefficients, moments: &EmpiricalMoments, gram: &Gram) -> f64 {
    -2.0 * dot(&lambda.0, &moments.mean) + gram.quadratic_form(&lambda.0)
}

/// `2 sum_j omega_j |lambda_j|`.
pub fn penalty(lambda: &Coefficients, weights: &WeightSpec) -> f64 {
    2.0 * lambda
        .0
        .iter()
        .zip(&weights.omega)
        .map(|(l, w)| w * l.abs())
        .sum::<f64>()
}

pub fn penalized_objective(
    lambda: &Coefficients,
    moments: &EmpiricalMoments,
    gram: &Gram,
    weights: &WeightSpec,
) -> f64 {
    empirical_loss(lambda, moments, gram) + penalty(lambda, weights)
}

/// Partial derivative of the empirical loss, `-2 c_j + 2 (Psi lambda)_j`.
pub fn coordinate_gradient(
    j: usize,
    lambda: &Coefficients,
    moments: &EmpiricalMoments,
    gram: &Gram,
) -> f64 {
    -2.0 * moments.mean[j] + 2.0 * dot(gram.column(j), &lambda.0)
}

/// `||f_hat - f_star||^2 = (hat - star)' Psi (hat - star)` for a truth in the
/// span of the dictionary.
pub fn l2_error_in_span(hat: &Coefficients, star: &Coefficients, gram: &Gram) -> f64 {
    let diff: Vec<f64> = hat.0.iter().zip(&star.0).map(|(a, b)| a - b).collect();
    gram.quadratic_form(&diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::GaussianAtom;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn moments(c: Vec<f64>) -> EmpiricalMoments {
        let q = c.iter().map(|v| v * v).collect();
        EmpiricalMoments::new(1, c, q).unwrap()
    }

    #[test]
    fn rate_examples() {
        assert_relative_eq!(rate_r(200, 100, 0.05).unwrap(), 0.288_00, epsilon = 1e-4);
        assert_relative_eq!(
            rate_r(200, 100, 0.05).unwrap(),
            (4000f64.ln() / 100.0).sqrt(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            rate_r(1, 1, (-1f64).exp()).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(selection_rate(200, 100, 0.1).unwrap(), 0.368_68, epsilon = 5e-6);
        assert!(rate_r(10, 10, 1.0).is_err());
        assert!(rate_r(10, 0, 0.5).is_err());
    }

    #[test]
    fn simple_and_mixture_weights() {
        let dict = Dictionary::gaussian_grid(200, 4.0, 1.0).unwrap();
        let mom = EmpiricalMoments::new(100, vec![0.0; 200], vec![0.0; 200]).unwrap();
        let w = make_weights(&dict, &mom, 0.1, WeightVariant::Simple).unwrap();
        assert_relative_eq!(w.omega[0], 0.865_30, epsilon = 5e-5);
        let w = make_weights(&dict, &mom, 0.1, WeightVariant::Mixture).unwrap();
        assert_relative_eq!(w.omega[17], 1.107_77, epsilon = 1e-4);
        assert!(make_weights(&dict, &mom, 1.5, WeightVariant::Simple).is_err());
    }

    #[test]
    fn data_driven_with_zero_values() {
        let dict = Dictionary::gaussian_grid(4, 4.0, 1.0).unwrap();
        let mom = EmpiricalMoments::new(50, vec![0.0; 4], vec![0.0; 4]).unwrap();
        let w = make_weights(&dict, &mom, 0.2, WeightVariant::DataDriven).unwrap();
        let r = rate_r(4, 50, 0.1).unwrap();
        let l = dict.sup_norms()[0];
        assert_relative_eq!(w.omega[2], (4.0 + 8.0 / 3.0) * l * r * r, epsilon = 1e-14);
    }

    #[test]
    fn loss_examples() {
        let g = Gram::identity(1);
        assert_eq!(empirical_loss(&Coefficients::zeros(1), &moments(vec![0.5]), &g), 0.0);
        assert_relative_eq!(
            empirical_loss(&vec![1.0].into(), &moments(vec![0.5]), &g),
            0.0,
            epsilon = 1e-15
        );
        let c = vec![0.3, -0.2, 0.7];
        let lc: Coefficients = c.clone().into();
        assert_relative_eq!(
            empirical_loss(&lc, &moments(c.clone()), &Gram::identity(3)),
            -dot(&c, &c),
            epsilon = 1e-15
        );
        let w = WeightSpec::scalar(0.1, 1);
        assert_relative_eq!(
            penalized_objective(&vec![0.4].into(), &moments(vec![0.5]), &g, &w),
            -0.16,
            epsilon = 1e-15
        );
        let w = WeightSpec::scalar(1.0, 2);
        assert_eq!(penalty(&vec![1.0, -2.0].into(), &w), 6.0);
    }

    #[test]
    fn gradient_examples() {
        let g = Gram::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let m = moments(vec![1.0, 0.0]);
        assert_eq!(coordinate_gradient(0, &Coefficients::zeros(2), &m, &g), -2.0);
        assert_eq!(coordinate_gradient(1, &vec![1.0, 0.0].into(), &m, &g), 1.0);
        let c = vec![0.4, 0.1];
        assert_eq!(
            coordinate_gradient(1, &c.clone().into(), &moments(c), &Gram::identity(2)),
            0.0
        );
    }

    #[test]
    fn l2_error_two_atoms() {
        let d = Dictionary::gaussian(vec![
            GaussianAtom::new(vec![0.0], 1.0).unwrap(),
            GaussianAtom::new(vec![4.0], 1.0).unwrap(),
        ])
        .unwrap();
        let e = l2_error_in_span(&vec![1.0, -1.0].into(), &Coefficients::zeros(2), d.gram());
        assert_relative_eq!(e, 2.0 - 2.0 * (-4f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(e, 1.963_37, epsilon = 5e-6);
        let same: Coefficients = vec![0.2, 0.3].into();
        assert_eq!(l2_error_in_span(&same, &same, d.gram()), 0.0);
    }

    fn random_instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (2usize..7).prop_flat_map(|m| {
            (
                prop::collection::vec(-5.0f64..5.0, m),
                prop::collection::vec(-1.0f64..1.0, m),
                prop::collection::vec(-1.0f64..1.0, m),
            )
        })
    }

    fn gram_from_means(means: &[f64]) -> Gram {
        let atoms = means
            .iter()
            .map(|&m| GaussianAtom::new(vec![m], 1.0).unwrap())
            .collect();
        Dictionary::gaussian(atoms).unwrap().gram().clone()
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences((means, c, lam) in random_instance()) {
            let g = gram_from_means(&means);
            let mom = moments(c);
            let lam: Coefficients = lam.into();
            let h = 1e-5;
            for j in 0..lam.len() {
                let mut up = lam.clone();
                up.0[j] += h;
                let mut dn = lam.clone();
                dn.0[j] -= h;
                let fd = (empirical_loss(&up, &mom, &g) - empirical_loss(&dn, &mom, &g)) / (2.0 * h);
                let an = coordinate_gradient(j, &lam, &mom, &g);
                prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0));
            }
        }

        #[test]
        fn objective_is_midpoint_convex(
            (means, c, a) in random_instance(),
            seed in prop::collection::vec(-1.0f64..1.0, 7),
            w in 0.0f64..0.5,
        ) {
            let g = gram_from_means(&means);
            let mom = moments(c);
            let m = a.len();
            let a: Coefficients = a.into();
            let b: Coefficients = seed[..m].to_vec().into();
            let mid: Coefficients = a.0.iter().zip(&b.0).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>().into();
            let ws = WeightSpec::scalar(w, m);
            let lhs = penalized_objective(&mid, &mom, &g, &ws);
            let rhs = 0.5 * penalized_objective(&a, &mom, &g, &ws) + 0.5 * penalized_objective(&b, &mom, &g, &ws);
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn penalty_is_positively_homogeneous(
            lam in prop::collection::vec(-3.0f64..3.0, 1..8),
            t in 0.0f64..10.0,
        ) {
            let ws = WeightSpec::scalar(0.7, lam.len());
            let scaled: Coefficients = lam.iter().map(|v| v * t).collect::<Vec<_>>().into();
            let lam: Coefficients = lam.into();
            let lhs = penalty(&scaled, &ws);
            let rhs = t * penalty(&lam, &ws);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn loss_with_population_moments_is_excess_risk(
            (means, star, lam) in random_instance()
        ) {
            // with c_j = <f_j, f*> for f* in the span, gamma(lambda) = ||f_lambda - f*||^2 - ||f*||^2
            let g = gram_from_means(&means);
            let c = g.apply(&star);
            let mom = moments(c);
            let star: Coefficients = star.into();
            let lam: Coefficients = lam.into();
            let lhs = empirical_loss(&lam, &mom, &g);
            let rhs = l2_error_in_span(&lam, &star, &g) - g.quadratic_form(&star.0);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }
}
