//! Sparse density estimation by l1-penalized empirical L2 loss.
//!
//! A density `f` on R^d is estimated by a linear combination
//! `f_lambda = sum_j lambda_j f_j` of dictionary atoms, with `lambda`
//! minimizing
//!
//! ```text
//! -(2/n) sum_i f_lambda(X_i) + ||f_lambda||^2 + 2 sum_j omega_j |lambda_j|
//! ```
//!
//! The crate is organized as the pipeline runs:
//!
//! - [`dictionary`]: Gaussian and Haar atoms, Gram matrices, empirical moments.
//! - [`objective`]: the loss, penalty and weight choices.
//! - [`optimizer`]: coordinate descent and the optimality certificate.
//! - [`tuning`]: bisection over penalty levels and cross-validated selection.
//! - [`theory`]: coherence quantities, condition checks and oracle bounds.
//! - [`experiments`]: simulation studies on Gaussian mixtures and a 2-D
//!   thick circle.
//!
//! ```
//! use spades::prelude::*;
//!
//! let dict = Dictionary::haar(3)?;
//! let sample = SampleSet::new(&[vec![0.1], vec![0.15], vec![0.7], vec![0.72]])?;
//! let moments = dict.empirical_moments(&sample)?;
//! let weights = WeightSpec::scalar(0.5, dict.len());
//! let fit = solve(&moments, dict.gram(), &weights, &SolverSettings::default(), None)?;
//! assert!(fit.converged);
//! # Ok::<(), spades::SpadesError>(())
//! ```

// Comparisons are written as `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictionary;
pub mod error;
pub mod experiments;
pub mod objective;
pub mod optimizer;
pub mod sample;
pub mod theory;
pub mod tuning;

pub use error::{Result, SpadesError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod prelude {
    pub use crate::dictionary::{Dictionary, DictionarySpec, EmpiricalMoments, GaussianAtom, Gram};
    pub use crate::error::{Result, SpadesError};
    pub use crate::objective::{
        empirical_loss, l2_error_in_span, make_weights, penalized_objective, rate_r,
        Coefficients, WeightSpec, WeightVariant,
    };
    pub use crate::optimizer::{kkt_check, solve, SolverSettings, SpadesFit};
    pub use crate::sample::SampleSet;
}

/// Code in the guide under `book/` compiles and runs as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/dictionaries.md")]
    mod dictionaries {}
    #[doc = include_str!("../../../book/src/estimator.md")]
    mod estimator {}
    #[doc = include_str!("../../../book/src/tuning.md")]
    mod tuning {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/studies.md")]
    mod studies {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
