use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("vector has zero norm")]
    ZeroNormVector,
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("too few samples: {n} (need at least {required})")]
    TooFewSamples { n: usize, required: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("row {row} is not a probability distribution: {reason}")]
    InvalidProbabilityRow { row: usize, reason: &'static str },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("invalid caption text: {0}")]
    InvalidCaption(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
