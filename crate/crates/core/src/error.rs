//! Error type shared by the library.

use thiserror::Error;

/// Library-wide error.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, malformed or violates an invariant.
    #[error("configuration error: {0}")]
    Config(String),
    /// Two vectors (or a vector and a problem) disagree on dimension.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    /// A problem construction was asked for parameters outside its admissible range.
    #[error("construction error: {0}")]
    Construction(String),
    /// The operation is not defined for this kind of input.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A caller broke an API contract (for example asked for an honest gradient of a Byzantine worker).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Malformed data sample.
    #[error("data error: {0}")]
    Data(String),
    /// A NaN or infinity was produced.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
