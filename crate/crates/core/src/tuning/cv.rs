use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bbm_find_fit, gbm_path, refit_on_support, top_level, TuningPath, DEFAULT_ALPHA_REL};
use crate::dictionary::{Dictionary, MomentSums};
use crate::error::{invalid, Result, SpadesError};
use crate::objective::empirical_loss;
use crate::optimizer::{SolverSettings, SpadesFit};
use crate::sample::SampleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
    pub seed: u64,
    /// Bisection width relative to the top level `w_0` of each data set.
    pub alpha_rel: f64,
    /// Multiplier `c` of the complexity term `c * k * ln(n) / n`.
    pub complexity: f64,
    pub solver: SolverSettings,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            alpha_rel: DEFAULT_ALPHA_REL,
            complexity: 0.5,
            solver: SolverSettings::default(),
        }
    }
}

/// Outcome of cross-validated support-size selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub k_hat: usize,
    pub w_final: f64,
    /// Held-out loss `L_k` averaged over folds, for every `k >= 1` found in
    /// all folds.
    pub per_k_loss: BTreeMap<usize, f64>,
    /// `L_k + c * k * ln(n) / n`.
    pub penalty_curve: BTreeMap<usize, f64>,
    pub folds: usize,
    pub seed: u64,
    /// Support sizes found in some but not all folds.
    pub excluded_k: Vec<usize>,
    /// The minimizer of the penalized curve could not be reached on the full
    /// sample and the next best size was used.
    pub fallback: bool,
    pub fold_fit_count: usize,
    pub ridge_refits: usize,
    pub fit: SpadesFit,
}

/// Complexity term `c * k * ln(n) / n`.
pub fn complexity_penalty(c: f64, k: usize, n: usize) -> f64 {
    c * k as f64 * (n as f64).ln() / n as f64
}

/// Contiguous fold blocks of one seeded shuffle of `0..n`. The first
/// `n % p` folds get one extra point.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Selects the support size by `folds`-fold cross-validation of refitted
/// held-out loss plus a dimension penalty, then locates a penalty level on
/// the full sample giving that support size.
pub fn cv_select(sample: &SampleSet, dict: &Dictionary, settings: &CvSettings) -> Result<CvSelection> {
    let n = sample.len();
    if settings.folds < 2 {
        return Err(invalid("folds", "need at least 2 folds"));
    }
    if n < settings.folds {
        return Err(invalid(
            "folds",
            format!("{} folds for {n} points", settings.folds),
        ));
    }
    if !(settings.alpha_rel > 0.0) {
        return Err(invalid("alpha_rel", "must be positive"));
    }
    settings.solver.validate()?;
    let gram = dict.gram();
    let blocks = fold_indices(n, settings.folds, settings.seed);
    let sums = blocks
        .iter()
        .map(|idx| dict.moment_sums(&sample.select(idx)))
        .collect::<Result<Vec<_>>>()?;

    let mut losses: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut fold_fit_count = 0;
    let mut ridge_refits = 0;
    for (j, held_sums) in sums.iter().enumerate() {
        let mut train = MomentSums::zeros(dict.len());
        for (i, s) in sums.iter().enumerate() {
            if i != j {
                train.merge(s);
            }
        }
        let train = train.to_moments()?;
        let held = held_sums.to_moments()?;
        let path: TuningPath = gbm_path(&train, gram, &settings.solver, settings.alpha_rel * top_level(&train))?;
        fold_fit_count += path.fit_count;
        for k in path.support_sizes().filter(|&k| k >= 1) {
            let support = path.support(k).expect("every entry has a support");
            let refit = refit_on_support(&support, &train, gram)?;
            ridge_refits += usize::from(refit.ridge_used);
            losses
                .entry(k)
                .or_default()
                .push(empirical_loss(&refit.coefficients, &held, gram));
        }
    }

    let mut per_k_loss = BTreeMap::new();
    let mut excluded_k = Vec::new();
    for (k, v) in &losses {
        if v.len() == settings.folds {
            per_k_loss.insert(*k, v.iter().sum::<f64>() / v.len() as f64);
        } else {
            excluded_k.push(*k);
        }
    }
    if per_k_loss.is_empty() {
        return Err(SpadesError::NoCandidates);
    }
    let penalty_curve: BTreeMap<usize, f64> = per_k_loss
        .iter()
        .map(|(&k, &l)| (k, l + complexity_penalty(settings.complexity, k, n)))
        .collect();
    let mut ranked: Vec<(usize, f64)> = penalty_curve.iter().map(|(&k, &v)| (k, v)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let full = dict.empirical_moments(sample)?;
    let alpha = settings.alpha_rel * top_level(&full);
    for (rank, &(k, _)) in ranked.iter().enumerate() {
        match bbm_find_fit(k, &full, gram, &settings.solver, alpha) {
            Ok((w, fit)) => {
                return Ok(CvSelection {
                    k_hat: k,
                    w_final: w,
                    per_k_loss,
                    penalty_curve,
                    folds: settings.folds,
                    seed: settings.seed,
                    excluded_k,
                    fallback: rank > 0,
                    fold_fit_count,
                    ridge_refits,
                    fit,
                })
            }
            Err(SpadesError::SupportSizeNotFound { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SpadesError::NoCandidates)
}

/// Writes `k,w_k,L_k,penalized` rows. `w_k` comes from `path` (the full
/// sample path) when present; missing values are left empty.
pub fn write_tuning_csv<W: Write>(selection: &CvSelection, path: Option<&TuningPath>, mut out: W) -> Result<()> {
    writeln!(out, "k,w_k,L_k,penalized")?;
    for (k, loss) in &selection.per_k_loss {
        let w = path
            .and_then(|p| p.level(*k))
            .map(|w| format!("{w:?}"))
            .unwrap_or_default();
        writeln!(out, "{k},{w},{loss:?},{:?}", selection.penalty_curve[k])?;
    }
    Ok(())
}
