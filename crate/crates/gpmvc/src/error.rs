//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("view {view}: expected {expected} rows, got {got}")]
    ViewRowMismatch {
        view: usize,
        expected: usize,
        got: usize,
    },

    #[error("view {view} row {row}: expected {expected} columns, got {got}")]
    ViewColMismatch {
        view: usize,
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("view {view} row {row} col {col}: non-numeric cell {cell:?}")]
    NonNumericCell {
        view: usize,
        row: usize,
        col: usize,
        cell: String,
    },

    #[error("labels: expected {expected} entries, got {got}")]
    LabelCountMismatch { expected: usize, got: usize },

    #[error("label {label} at row {row} outside 0..{classes}")]
    LabelOutOfRange {
        row: usize,
        label: i64,
        classes: usize,
    },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("ratio must be in [0,1], got {0}")]
    RatioOutOfRange(f64),

    #[error("operation requires at least {required} views, dataset has {got}")]
    TooFewViews { required: usize, got: usize },

    #[error("view {0} is observed by zero samples")]
    UnobservedView(usize),

    #[error("cluster {0} has zero soft frequency")]
    EmptyCluster(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for rejected inputs, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RatioOutOfRange(_)
            | Error::TooFewViews { .. }
            | Error::InvalidConfig(_)
            | Error::Invalid(_)
            | Error::ViewRowMismatch { .. }
            | Error::ViewColMismatch { .. }
            | Error::NonNumericCell { .. }
            | Error::LabelCountMismatch { .. }
            | Error::LabelOutOfRange { .. }
            | Error::EmptyClass(_)
            | Error::ShapeMismatch(_) => 2,
            _ => 3,
        }
    }
}
