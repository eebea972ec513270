use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{element} references unknown {kind} {id}")]
    DanglingReference {
        element: String,
        kind: &'static str,
        id: usize,
    },

    #[error("{element}: {field} must be positive, got {value}")]
    NonPositive {
        element: String,
        field: &'static str,
        value: f64,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("singular {what} (reciprocal condition estimate {rcond:.3e})")]
    Singular { what: &'static str, rcond: f64 },

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("power flow failed at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("Holt smoother used before it saw two observations")]
    HoltNotInitialized,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
