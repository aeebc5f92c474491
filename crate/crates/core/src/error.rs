use alloc::string::String;

use crate::model::SeverityGrade;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("filter design error: {0}")]
    Design(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },
    #[error("segment too short: {len} samples, need at least {min}")]
    SegmentTooShort { len: usize, min: usize },
    #[error("no stance region found (no piece with mean above 5% of peak)")]
    StanceNotFound,
    #[error("envelope has no activity (peak is zero)")]
    NoActivity,
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("class {class} has {count} rows, fewer than the {k} folds requested")]
    Stratification { class: SeverityGrade, count: usize, k: usize },
    #[error("class {class} has a single row, cannot balance or find neighbours")]
    CannotBalance { class: SeverityGrade },
    #[error("ReliefF neighbour clamp failed: class {class} has a single row")]
    NeighbourClamp { class: SeverityGrade },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("prediction failed: {0}")]
    Prediction(String),
    #[error("synthetic spec error: {0}")]
    Spec(String),
}

pub type Result<T> = core::result::Result<T, Error>;
