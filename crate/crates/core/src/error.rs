use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solvers and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("site index {index} out of range for width {width}")]
    IndexOutOfRange { index: usize, width: usize },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("not normalized: squared norm {0}")]
    NotNormalized(f64),

    #[error("ground state did not converge after {iterations} iterations (best residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dataset too small: {have} samples, need at least {need}")]
    DatasetTooSmall { have: usize, need: usize },

    #[error("dataset contains no samples")]
    EmptyDataset,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::Numeric(_) | Error::Fit(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
