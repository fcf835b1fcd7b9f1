use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpadesError {
    #[error("atom index {index} out of range for a dictionary of {size} atoms")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sample is empty")]
    EmptySample,

    #[error("atom {index} has a zero Gram diagonal entry")]
    DegenerateAtom { index: usize },

    #[error("no penalty level reaches support size {target} (bisection width {width:e})")]
    SupportSizeNotFound { target: usize, width: f64 },

    #[error("no support size was discovered in every fold")]
    NoCandidates,

    #[error("the requested operation needs a {expected} dictionary")]
    WrongDictionaryKind { expected: &'static str },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SpadesError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SpadesError {
    SpadesError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
