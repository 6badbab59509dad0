//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by set kernels, GP fitting, and the optimization loops.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user input was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two objects that must share an ambient dimension do not.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Cholesky factorization failed: the named leading principal minor is
    /// not positive definite.
    #[error("correlation matrix is singular: leading minor of order {minor} is not positive definite")]
    SingularMatrix { minor: usize },

    /// Cholesky failed even after the conditioning jitter was applied.
    #[error("correlation matrix remains singular after jitter {jitter:.3e} (leading minor of order {minor})")]
    SingularAfterJitter { minor: usize, jitter: f64 },

    /// Q^2 is undefined because the reference responses are constant.
    #[error("predictive coefficient undefined: actual responses are constant")]
    ConstantResponses,

    /// CSV ingestion failed at a specific line.
    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: u64, message: String },

    /// Underlying file I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Every candidate in the pool has already been evaluated.
    #[error("candidate pool exhausted: all candidates evaluated")]
    PoolExhausted,

    /// Every hyperparameter candidate produced a singular correlation
    /// matrix. Typical for double-sum kernels on finite ground sets; a
    /// jitter policy `Bound(a)` works around it.
    #[error("all hyperparameter candidates produced singular fits; consider jitter policy Bound(a)")]
    ExhaustiveSingularity,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad caller input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::CsvParse { .. }
                | Error::ConstantResponses
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
