//! Candidate families `f_1..f_M` with their Gram matrix, sup-norms and
//! empirical moments.
//!
//! Two kinds are built: L2-normalized isotropic Gaussians on R^d and the
//! orthonormal Haar system on `[0, 1]`. Everything a solver needs is cached
//! at construction, so a [`Dictionary`] is immutable and can be shared across
//! threads.

mod gaussian;
mod haar;
mod spec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use gaussian::{inner_product as gaussian_inner_product, GaussianAtom};
pub use haar::{haar_atoms, haar_atoms_truncated, truncation_level, HaarAtom};
pub use spec::{DictionarySpec, GridSpec};

use crate::error::{invalid, Result, SpadesError};
use crate::sample::SampleSet;

/// Symmetric matrix of pairwise inner products `<f_i, f_j>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram(DMatrix<f64>);

impl Gram {
    /// Wraps a matrix after checking it is square, symmetric and has a
    /// strictly positive diagonal.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid("gram", "matrix must be square"));
        }
        let m = matrix.nrows();
        for i in 0..m {
            if !(matrix[(i, i)] > 0.0) {
                return Err(SpadesError::DegenerateAtom { index: i });
            }
            for j in 0..i {
                if matrix[(i, j)] != matrix[(j, i)] || !matrix[(i, j)].is_finite() {
                    return Err(invalid("gram", format!("entry ({i}, {j}) is not symmetric")));
                }
            }
        }
        Ok(Self(matrix))
    }

    pub fn identity(m: usize) -> Self {
        Self(DMatrix::identity(m, m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Column `j` as a contiguous slice (equal to row `j` by symmetry).
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.dim();
        &self.0.as_slice()[j * m..(j + 1) * m]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `Psi * v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                for (o, g) in out.iter_mut().zip(self.column(j)) {
                    *o += g * vj;
                }
            }
        }
        out
    }

    /// `v' Psi v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.apply(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// `c_j = (1/n) sum_i f_j(X_i)` and `(1/n) sum_i f_j(X_i)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub n: usize,
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl EmpiricalMoments {
    pub fn new(n: usize, mean: Vec<f64>, second_moment: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(SpadesError::EmptySample);
        }
        if mean.len() != second_moment.len() {
            return Err(SpadesError::DimensionMismatch {
                expected: mean.len(),
                got: second_moment.len(),
            });
        }
        Ok(Self {
            n,
            mean,
            second_moment,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `max_j |c_j|`.
    pub fn max_abs_mean(&self) -> f64 {
        self.mean.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Unnormalized per-atom sums over a set of points. Sums for disjoint point
/// sets add, which is how cross-validation derives training and held-out
/// moments from one pass over the data.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSums {
    pub count: usize,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl MomentSums {
    pub fn zeros(m: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; m],
            sum_sq: vec![0.0; m],
        }
    }

    pub fn add_values(&mut self, values: &[f64]) {
        self.count += 1;
        for ((s, q), v) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(values) {
            *s += v;
            *q += v * v;
        }
    }

    pub fn merge(&mut self, other: &MomentSums) {
        self.count += other.count;
        for (s, o) in self.sum.iter_mut().zip(&other.sum) {
            *s += o;
        }
        for (s, o) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *s += o;
        }
    }

    pub fn to_moments(&self) -> Result<EmpiricalMoments> {
        if self.count == 0 {
            return Err(SpadesError::EmptySample);
        }
        let n = self.count as f64;
        EmpiricalMoments::new(
            self.count,
            self.sum.iter().map(|s| s / n).collect(),
            self.sum_sq.iter().map(|s| s / n).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Atoms {
    Gaussian { dim: usize, atoms: Vec<GaussianAtom> },
    Haar { atoms: Vec<HaarAtom> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    Gaussian,
    Haar,
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: Atoms,
    gram: Gram,
    sup_norms: Vec<f64>,
    l2_norms: Vec<f64>,
}

impl Dictionary {
    /// Normalized Gaussian atoms; all atoms must share a dimension.
    pub fn gaussian(atoms: Vec<GaussianAtom>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| invalid("atoms", "dictionary needs at least one atom"))?;
        let dim = first.dim();
        if let Some(bad) = atoms.iter().find(|a| a.dim() != dim) {
            return Err(SpadesError::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        let m = atoms.len();
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            g[(i, i)] = 1.0;
            for j in 0..i {
                let v = gaussian::inner_product(&atoms[i], &atoms[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        let sup_norms = atoms.iter().map(GaussianAtom::sup_norm).collect();
        Self::assemble(Atoms::Gaussian { dim, atoms }, g, sup_norms)
    }

    /// `N(spacing * j, tau^2)` for `j = 1..=count` on the real line.
    pub fn gaussian_grid(count: usize, spacing: f64, tau: f64) -> Result<Self> {
        let atoms = (1..=count)
            .map(|j| GaussianAtom::new(vec![spacing * j as f64], tau))
            .collect::<Result<Vec<_>>>()?;
        Self::gaussian(atoms)
    }

    /// Haar atoms for levels `-1..=l_max`; `2^(l_max + 1)` atoms in total.
    pub fn haar(l_max: u32) -> Result<Self> {
        if l_max > 24 {
            return Err(invalid("l_max", "levels above 24 are not supported"));
        }
        Self::haar_from_atoms(haar_atoms(l_max))
    }

    /// The first `count` Haar atoms (father, then level by level).
    pub fn haar_with_atoms(count: usize) -> Result<Self> {
        if count == 0 || count > 1 << 25 {
            return Err(invalid("atoms", format!("unsupported Haar atom count {count}")));
        }
        Self::haar_from_atoms(haar_atoms_truncated(count))
    }

    /// Haar dictionary truncated at the largest `l` with `2^l <= n / ln n`.
    pub fn haar_for_sample_size(n: usize) -> Result<Self> {
        Self::haar(truncation_level(n))
    }

    fn haar_from_atoms(atoms: Vec<HaarAtom>) -> Result<Self> {
        let m = atoms.len();
        let sup_norms = atoms.iter().map(HaarAtom::sup_norm).collect();
        Self::assemble(Atoms::Haar { atoms }, DMatrix::identity(m, m), sup_norms)
    }

    fn assemble(atoms: Atoms, gram: DMatrix<f64>, sup_norms: Vec<f64>) -> Result<Self> {
        let gram = Gram::new(gram)?;
        let l2_norms = (0..gram.dim()).map(|j| gram.get(j, j).sqrt()).collect();
        Ok(Self {
            atoms,
            gram,
            sup_norms,
            l2_norms,
        })
    }

    pub fn len(&self) -> usize {
        self.gram.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match &self.atoms {
            Atoms::Gaussian { dim, .. } => *dim,
            Atoms::Haar { .. } => 1,
        }
    }

    pub fn kind(&self) -> DictionaryKind {
        match self.atoms {
            Atoms::Gaussian { .. } => DictionaryKind::Gaussian,
            Atoms::Haar { .. } => DictionaryKind::Haar,
        }
    }

    pub fn atoms(&self) -> &Atoms {
        &self.atoms
    }

    pub fn gaussian_atoms(&self) -> Option<&[GaussianAtom]> {
        match &self.atoms {
            Atoms::Gaussian { atoms, .. } => Some(atoms),
            Atoms::Haar { .. } => None,
        }
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    /// `L_j = ||f_j||_inf`.
    pub fn sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    /// `||f_j||`, equal to one for every atom kind built here.
    pub fn l2_norms(&self) -> &[f64] {
        &self.l2_norms
    }

    /// `f_j(x)`.
    pub fn evaluate(&self, j: usize, x: &[f64]) -> Result<f64> {
        if j >= self.len() {
            return Err(SpadesError::IndexOutOfRange {
                index: j,
                size: self.len(),
            });
        }
        if x.len() != self.dim() {
            return Err(SpadesError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match &self.atoms {
            Atoms::Gaussian { atoms, .. } => atoms[j].value(x),
            Atoms::Haar { atoms } => atoms[j].value(x[0]),
        })
    }

    /// All atoms at `x`, written into `out`. `x` must have dimension
    /// [`Dictionary::dim`].
    pub fn evaluate_all(&self, x: &[f64], out: &mut [f64]) {
        match &self.atoms {
            Atoms::Gaussian { atoms, .. } => {
                for (o, a) in out.iter_mut().zip(atoms) {
                    *o = a.value(x);
                }
            }
            Atoms::Haar { atoms } => {
                for (o, a) in out.iter_mut().zip(atoms) {
                    *o = a.value(x[0]);
                }
            }
        }
    }

    /// `f_lambda(x) = sum_j lambda_j f_j(x)`.
    pub fn combination_at(&self, lambda: &[f64], x: &[f64]) -> f64 {
        let mut vals = vec![0.0; self.len()];
        self.evaluate_all(x, &mut vals);
        vals.iter().zip(lambda).map(|(v, l)| v * l).sum()
    }

    fn check_sample(&self, sample: &SampleSet) -> Result<()> {
        if sample.is_empty() {
            return Err(SpadesError::EmptySample);
        }
        if sample.dim() != self.dim() {
            return Err(SpadesError::DimensionMismatch {
                expected: self.dim(),
                got: sample.dim(),
            });
        }
        Ok(())
    }

    /// Per-atom sums over the points of `sample`.
    pub fn moment_sums(&self, sample: &SampleSet) -> Result<MomentSums> {
        if sample.dim() != self.dim() {
            return Err(SpadesError::DimensionMismatch {
                expected: self.dim(),
                got: sample.dim(),
            });
        }
        let mut sums = MomentSums::zeros(self.len());
        let mut vals = vec![0.0; self.len()];
        for p in sample.iter() {
            self.evaluate_all(p, &mut vals);
            sums.add_values(&vals);
        }
        Ok(sums)
    }

    /// First and second empirical moments of every atom, in one pass.
    pub fn empirical_moments(&self, sample: &SampleSet) -> Result<EmpiricalMoments> {
        self.check_sample(sample)?;
        self.moment_sums(sample)?.to_moments()
    }
}
