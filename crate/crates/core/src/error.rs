use thiserror::Error;

/// Errors raised by the algebraic and system-level operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeisError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("not a derivation: {0}")]
    NotDerivation(String),

    #[error("matrix is not a Lie algebra automorphism")]
    NotAutomorphism,

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("rank condition fails")]
    RankCondition,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, HeisError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(HeisError::DimensionMismatch { expected, found })
    }
}
