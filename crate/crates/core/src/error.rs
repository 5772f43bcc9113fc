//! Crate-wide error type.

use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid network or problem shape.
    #[error("invalid shape: {0}")]
    Shape(String),
    /// A vector or matrix had the wrong length.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// NaN or infinity where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// Invalid argument or precondition violation.
    #[error("{0}")]
    Invalid(String),
    /// Text parse failure, pointing at the offending line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    /// Configuration problem.
    #[error("config error: {0}")]
    Config(String),
    /// Dense linear algebra failure (non-PD matrix, singularity).
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    /// The maintained A-inverse lost positive definiteness.
    #[error("broken positive-definite invariant: {0}")]
    BrokenPd(String),
    /// Gradient descent produced a non-finite loss or gradient.
    #[error("training diverged: {0}")]
    Diverged(String),
    /// Iterative eigensolver hit its iteration cap.
    #[error("eigenvalue iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    /// I/O failure, tagged with the path involved.
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
