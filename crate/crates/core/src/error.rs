use thiserror::Error;

/// Errors produced by statistical operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Domain or precondition violation in the inputs.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested quantity is mathematically undefined for these inputs.
    #[error("undefined result: {0}")]
    Undefined(String),

    /// A numerical procedure failed (bracket exhausted, non-convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
