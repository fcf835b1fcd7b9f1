//! Penalty-level search by bisection on the support size, and selection of
//! the final level by dimension-stabilized cross-validation.
//!
//! Every search here uses a scalar penalty `omega_j = w` and counts the
//! nonzero coefficients `n_hat(w)` of the resulting fit. `n_hat(w) = 0` for
//! every `w >= max_j |c_j|`, which fixes the top of the search interval
//! without a solve.

mod cv;

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use cv::{cv_select, write_tuning_csv, CvSelection, CvSettings};

use crate::dictionary::{EmpiricalMoments, Gram};
use crate::error::{invalid, Result, SpadesError};
use crate::objective::{penalized_objective, Coefficients, WeightSpec};
use crate::optimizer::{kkt_check, solve, SolverSettings, SpadesFit};

/// Margin added to `max_j |c_j|` so the top level certifies the zero fit
/// strictly.
pub const TOP_LEVEL_MARGIN: f64 = 1e-12;

/// Relative bisection width used when none is given: `alpha = 1e-6 * w_0`.
pub const DEFAULT_ALPHA_REL: f64 = 1e-6;

/// `w_0 = max_j |c_j| + margin`; the smallest level the search starts from.
pub fn top_level(moments: &EmpiricalMoments) -> f64 {
    moments.max_abs_mean() + TOP_LEVEL_MARGIN
}

pub fn default_alpha(moments: &EmpiricalMoments) -> f64 {
    DEFAULT_ALPHA_REL * top_level(moments)
}

/// Support size at one penalty level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NHat {
    pub count: usize,
    /// False when the solver ran out of sweeps; the count is then only as
    /// good as the last iterate.
    pub converged: bool,
}

/// `n_hat(w)`: number of nonzero coefficients of the fit with `omega_j = w`.
pub fn n_hat(w: f64, moments: &EmpiricalMoments, gram: &Gram, settings: &SolverSettings) -> Result<NHat> {
    if !(w >= 0.0) {
        return Err(invalid("w", format!("penalty level must be >= 0, got {w}")));
    }
    let fit = solve(moments, gram, &WeightSpec::scalar(w, gram.dim()), settings, None)?;
    Ok(NHat {
        count: fit.support_size(),
        converged: fit.converged,
    })
}

/// Solves at many penalty levels, warm-starting each solve from the stored
/// solution whose level is closest.
struct LevelSolver<'a> {
    moments: &'a EmpiricalMoments,
    gram: &'a Gram,
    settings: &'a SolverSettings,
    solved: Vec<(f64, Coefficients)>,
    calls: usize,
    unconverged: usize,
}

impl<'a> LevelSolver<'a> {
    fn new(moments: &'a EmpiricalMoments, gram: &'a Gram, settings: &'a SolverSettings) -> Self {
        Self {
            moments,
            gram,
            settings,
            solved: Vec::new(),
            calls: 0,
            unconverged: 0,
        }
    }

    fn fit(&mut self, w: f64) -> Result<SpadesFit> {
        let start = self
            .solved
            .iter()
            .min_by(|a, b| (a.0 - w).abs().total_cmp(&(b.0 - w).abs()))
            .map(|(_, c)| c);
        let weights = WeightSpec::scalar(w, self.gram.dim());
        let fit = solve(self.moments, self.gram, &weights, self.settings, start)?;
        self.calls += 1;
        if !fit.converged {
            self.unconverged += 1;
        }
        self.solved.push((w, fit.lambda_hat.clone()));
        Ok(fit)
    }
}

/// The fit at `w_0`, where zero is optimal.
fn zero_fit(w: f64, moments: &EmpiricalMoments, gram: &Gram, settings: &SolverSettings) -> SpadesFit {
    let m = gram.dim();
    let lambda = Coefficients::zeros(m);
    let weights = WeightSpec::scalar(w, m);
    let cert = kkt_check(&lambda, moments, gram, &weights, settings.certificate_tol);
    SpadesFit {
        objective: penalized_objective(&lambda, moments, gram, &weights),
        lambda_hat: lambda,
        support: Vec::new(),
        weights,
        sweeps: 0,
        kkt_residual: cert.max_residual,
        converged: cert.certified,
    }
}

/// Penalty levels `w_k` with `n_hat(w_k) = k`, one per support size found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningPath {
    pub atoms: usize,
    pub entries: BTreeMap<usize, f64>,
    /// Fits at every discovered level except the full-support endpoint
    /// `w = 0`, which is taken as given rather than solved.
    pub fits: BTreeMap<usize, SpadesFit>,
    /// Solver calls consumed (both analytic endpoints are free).
    pub fit_count: usize,
    pub unconverged: usize,
    pub top_level: f64,
    pub alpha: f64,
}

impl TuningPath {
    pub fn support_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn level(&self, k: usize) -> Option<f64> {
        self.entries.get(&k).copied()
    }

    /// Support of the fit recorded for size `k`.
    pub fn support(&self, k: usize) -> Option<Vec<usize>> {
        match self.fits.get(&k) {
            Some(fit) => Some(fit.support.clone()),
            None if k == self.atoms && self.entries.contains_key(&k) => Some((0..k).collect()),
            None => None,
        }
    }
}

/// Queue-driven bisection discovering one penalty level per reachable
/// support size.
///
/// The endpoints are analytic: `n_hat(w_0) = 0` and `n_hat(0) = M`, the
/// latter holding for positive-definite Gram matrices and generic data.
/// The queue starts with `(w_0, 0)`. Each popped pair `(a, b)` is split at
/// `w = (a + b) / 2`; the first level seen for a support size `k = n_hat(w)`
/// is recorded, and a half is queued again when its end's support size
/// differs from `k` by more than one and the half is wider than `alpha`.
/// Support sizes that no level reaches within `alpha` are absent.
pub fn gbm_path(
    moments: &EmpiricalMoments,
    gram: &Gram,
    settings: &SolverSettings,
    alpha: f64,
) -> Result<TuningPath> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", "bisection width must be positive"));
    }
    settings.validate()?;
    let w0 = top_level(moments);
    let mut solver = LevelSolver::new(moments, gram, settings);
    let mut entries = BTreeMap::new();
    let mut fits = BTreeMap::new();

    entries.insert(0, w0);
    let top = zero_fit(w0, moments, gram, settings);
    solver.solved.push((w0, top.lambda_hat.clone()));
    fits.insert(0, top);

    let m = gram.dim();
    entries.entry(m).or_insert(0.0);

    let mut queue = VecDeque::from([(w0, 0usize, 0.0f64, m)]);
    while let Some((a, na, b, nb)) = queue.pop_front() {
        let w = 0.5 * (a + b);
        let fit = solver.fit(w)?;
        let k = fit.support_size();
        if let std::collections::btree_map::Entry::Vacant(e) = entries.entry(k) {
            e.insert(w);
            fits.insert(k, fit);
        }
        if na.abs_diff(k) > 1 && (a - w).abs() > alpha {
            queue.push_back((a, na, w, k));
        }
        if nb.abs_diff(k) > 1 && (b - w).abs() > alpha {
            queue.push_back((w, k, b, nb));
        }
    }
    Ok(TuningPath {
        atoms: m,
        entries,
        fits,
        fit_count: solver.calls,
        unconverged: solver.unconverged,
        top_level: w0,
        alpha,
    })
}

/// Plain bisection on `[0, w_0]` for a level with `n_hat(w) = k_target`.
/// Returns the level together with the fit computed there.
pub fn bbm_find_fit(
    k_target: usize,
    moments: &EmpiricalMoments,
    gram: &Gram,
    settings: &SolverSettings,
    alpha: f64,
) -> Result<(f64, SpadesFit)> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", "bisection width must be positive"));
    }
    let not_found = SpadesError::SupportSizeNotFound {
        target: k_target,
        width: alpha,
    };
    if k_target > gram.dim() {
        return Err(not_found);
    }
    let w0 = top_level(moments);
    if k_target == 0 {
        return Ok((w0, zero_fit(w0, moments, gram, settings)));
    }
    let mut solver = LevelSolver::new(moments, gram, settings);
    if k_target == gram.dim() {
        return Ok((0.0, solver.fit(0.0)?));
    }
    let (mut lo, mut hi) = (0.0, w0);
    while hi - lo > alpha {
        let mid = 0.5 * (lo + hi);
        let fit = solver.fit(mid)?;
        let k = fit.support_size();
        if k == k_target {
            return Ok((mid, fit));
        }
        if k > k_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(not_found)
}

/// Penalty level with `n_hat(w) = k_target`, found by bisection.
pub fn bbm_find(
    k_target: usize,
    moments: &EmpiricalMoments,
    gram: &Gram,
    settings: &SolverSettings,
    alpha: f64,
) -> Result<f64> {
    bbm_find_fit(k_target, moments, gram, settings, alpha).map(|(w, _)| w)
}

/// Unpenalized least-squares coefficients restricted to a support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refit {
    pub coefficients: Coefficients,
    /// The Gram submatrix was not numerically positive definite and a small
    /// ridge was added.
    pub ridge_used: bool,
}

/// Solves `Psi_SS lambda_S = c_S` and zeros the rest.
///
/// Falls back to `Psi_SS + eps I` with `eps = 1e-10 * trace / |S|` when the
/// Cholesky factorization fails.
pub fn refit_on_support(support: &[usize], moments: &EmpiricalMoments, gram: &Gram) -> Result<Refit> {
    if support.is_empty() {
        return Err(invalid("support", "must be nonempty"));
    }
    let m = gram.dim();
    if let Some(&bad) = support.iter().find(|&&j| j >= m) {
        return Err(SpadesError::IndexOutOfRange { index: bad, size: m });
    }
    let s = support.len();
    let sub = DMatrix::from_fn(s, s, |a, b| gram.get(support[a], support[b]));
    let rhs = DVector::from_iterator(s, support.iter().map(|&j| moments.mean[j]));
    let (solution, ridge_used) = match Cholesky::new(sub.clone()) {
        Some(ch) => (ch.solve(&rhs), false),
        None => {
            let jitter = 1e-10 * sub.trace() / s as f64;
            let ridged = &sub + DMatrix::identity(s, s) * jitter;
            let ch = Cholesky::new(ridged).ok_or_else(|| invalid("support", "Gram submatrix is singular"))?;
            (ch.solve(&rhs), true)
        }
    };
    let mut coefficients = Coefficients::zeros(m);
    for (idx, &j) in support.iter().enumerate() {
        coefficients.0[j] = solution[idx];
    }
    Ok(Refit {
        coefficients,
        ridge_used,
    })
}
