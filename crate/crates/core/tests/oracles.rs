use proptest::prelude::*;

use spades::prelude::*;
use spades::tuning::{gbm_path, n_hat, refit_on_support};

fn dictionary(means: &[f64], taus: &[f64]) -> Dictionary {
    Dictionary::gaussian(
        means
            .iter()
            .zip(taus)
            .map(|(&m, &t)| GaussianAtom::new(vec![m], t).unwrap())
            .collect(),
    )
    .unwrap()
}

fn moments_for(dict: &Dictionary, points: &[f64]) -> EmpiricalMoments {
    dict.empirical_moments(&SampleSet::from_flat(1, points.to_vec()).unwrap()).unwrap()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn linear_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(row);
            for (dst, src) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn objective(lambda: &[f64], c: &[f64], gram: &Gram, omega: &[f64]) -> f64 {
    let quad = gram.quadratic_form(lambda);
    let lin: f64 = lambda.iter().zip(c).map(|(l, c)| -2.0 * l * c).sum();
    let pen: f64 = lambda.iter().zip(omega).map(|(l, w)| 2.0 * w * l.abs()).sum();
    quad + lin + pen
}

/// Exact minimizer by enumerating every support and sign pattern: on a fixed
/// pattern the objective is quadratic and the stationary point solves
/// `Psi_SS x = c_S - omega_S * s`. Patterns whose solution disagrees with
/// the assumed signs are discarded.
fn enumerate_minimum(c: &[f64], gram: &Gram, omega: &[f64]) -> f64 {
    let m = c.len();
    let mut best = 0.0;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
        for signs in 0u32..(1 << support.len()) {
            let s: Vec<f64> = (0..support.len())
                .map(|i| if signs >> i & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let a = support
                .iter()
                .map(|&i| support.iter().map(|&j| gram.get(i, j)).collect())
                .collect();
            let b = support.iter().zip(&s).map(|(&j, s)| c[j] - omega[j] * s).collect();
            let Some(x) = linear_solve(a, b) else { continue };
            if x.iter().zip(&s).any(|(x, s)| x * s <= 0.0) {
                continue;
            }
            let mut lambda = vec![0.0; m];
            for (&j, v) in support.iter().zip(&x) {
                lambda[j] = *v;
            }
            best = f64::min(best, objective(&lambda, c, gram, omega));
        }
    }
    best
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=5).prop_flat_map(|m| {
        (
            prop::collection::vec(-3.0f64..3.0, m),
            prop::collection::vec(0.6f64..1.4, m),
            prop::collection::vec(-2.5f64..2.5, 20..60),
            prop::collection::vec(0.0f64..0.3, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_reaches_enumerated_minimum((means, taus, points, omega) in instance()) {
        let dict = dictionary(&means, &taus);
        let moments = moments_for(&dict, &points);
        let weights = WeightSpec::custom(omega).unwrap();
        let settings = SolverSettings { epsilon: 1e-13, max_sweeps: 1_000_000, ..SolverSettings::default() };
        let fit = solve(&moments, dict.gram(), &weights, &settings, None).unwrap();
        let exact = enumerate_minimum(&moments.mean, dict.gram(), &weights.omega);
        prop_assert!((fit.objective - exact).abs() <= 1e-8 * (1.0 + exact.abs()), "{} vs {}", fit.objective, exact);
    }

    #[test]
    fn warm_start_does_not_change_the_optimum((means, taus, points, omega) in instance(), start in prop::collection::vec(-1.0f64..1.0, 5)) {
        let dict = dictionary(&means, &taus);
        let moments = moments_for(&dict, &points);
        let weights = WeightSpec::custom(omega).unwrap();
        let settings = SolverSettings { epsilon: 1e-12, max_sweeps: 1_000_000, ..SolverSettings::default() };
        let cold = solve(&moments, dict.gram(), &weights, &settings, None).unwrap();
        let start = Coefficients::from(start[..dict.len()].to_vec());
        let warm = solve(&moments, dict.gram(), &weights, &settings, Some(&start)).unwrap();
        prop_assert!((cold.objective - warm.objective).abs() <= 1e-10);
        prop_assert!(warm.converged);
    }

    #[test]
    fn path_levels_reverify_from_cold_starts((means, taus, points, _) in instance()) {
        let dict = dictionary(&means, &taus);
        let moments = moments_for(&dict, &points);
        let settings = SolverSettings::default();
        let path = gbm_path(&moments, dict.gram(), &settings, 1e-7).unwrap();
        prop_assert_eq!(path.level(0), Some(path.top_level));
        for (&k, &w) in &path.entries {
            if k < dict.len() {
                prop_assert_eq!(n_hat(w, &moments, dict.gram(), &settings).unwrap().count, k);
            }
        }
        let levels: Vec<f64> = path.entries.values().copied().collect();
        prop_assert!(levels.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn refit_is_the_restricted_least_squares_solution((means, taus, points, _) in instance(), mask in 1u32..32) {
        let dict = dictionary(&means, &taus);
        let moments = moments_for(&dict, &points);
        let support: Vec<usize> = (0..dict.len()).filter(|j| mask >> j & 1 == 1).collect();
        prop_assume!(!support.is_empty());
        let refit = refit_on_support(&support, &moments, dict.gram()).unwrap();
        prop_assume!(!refit.ridge_used);
        let a = support.iter().map(|&i| support.iter().map(|&j| dict.gram().get(i, j)).collect()).collect();
        let b = support.iter().map(|&j| moments.mean[j]).collect();
        let x = linear_solve(a, b).unwrap();
        for (j, v) in refit.coefficients.as_slice().iter().enumerate() {
            let expected = support.iter().position(|&s| s == j).map_or(0.0, |i| x[i]);
            prop_assert!((v - expected).abs() <= 1e-6 * (1.0 + expected.abs()), "atom {j}: {v} vs {expected}");
        }
    }
}

#[test]
fn haar_fit_is_soft_thresholding_for_every_weight_choice() {
    let dict = Dictionary::haar(4).unwrap();
    let points: Vec<f64> = (0..150).map(|i| ((i * 61) % 150) as f64 / 150.0 * if i % 4 == 0 { 0.3 } else { 1.0 }).collect();
    let moments = moments_for(&dict, &points);
    for variant in [WeightVariant::Simple, WeightVariant::DataDriven, WeightVariant::Bernstein, WeightVariant::Scalar(0.2)] {
        let weights = make_weights(&dict, &moments, 0.1, variant).unwrap();
        let fit = solve(&moments, dict.gram(), &weights, &SolverSettings::default(), None).unwrap();
        for ((l, c), w) in fit.lambda_hat.as_slice().iter().zip(&moments.mean).zip(&weights.omega) {
            let expected = c.signum() * (c.abs() - w).max(0.0);
            assert!((l - expected).abs() <= 1e-12, "{variant:?}: {l} vs {expected}");
        }
    }
}
