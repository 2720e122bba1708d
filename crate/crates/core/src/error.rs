use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A state or iterate became non-finite.
    #[error("divergence at step {step}: non-finite state")]
    Divergence { step: usize },

    #[error("prox oracle failed: {0}")]
    OracleFailure(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("operation requires {expected} problem")]
    WrongProblem { expected: &'static str },

    #[error("missing data: {0}")]
    MissingData(&'static str),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}
