//! Simulated mixture-identification studies and the thick-circle
//! approximation, producing tables ready for plotting.

mod circle;
mod study;
mod truth;

pub use circle::{centers_dictionary, excess_loss_curve, greedy_centers, sample_circle, ExcessLossCurve};
pub use study::{
    derive_seed, quantile, run_circle_study, run_identification_study, run_separation_study, run_study,
    spaced_dictionary, CellSummary, CircleOutcome, CircleSettings, ReplicateRecord, ReplicateStatus, Selection,
    StudyConfig, StudyKind, StudyResult, SUPPORT_TOL,
};
pub use truth::{sample_mixture, MixtureTruth};
