use std::path::PathBuf;

use crate::data::{Label, SampleId};

pub type Result<T, E = HirfError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum HirfError {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("duplicate sample id {0}")]
    DuplicateId(SampleId),

    #[error("class {0} has no samples")]
    EmptyClass(Label),

    #[error("label {0} is not present in the dataset")]
    UnknownLabel(Label),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("a split needs at least two observed classes, found {0}")]
    TooFewClasses(usize),

    #[error("no admissible split found after {0} attempts")]
    NoAdmissibleSplit(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input at {path:?} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
