use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("output space has {count} elements, above the enumeration cap of {cap}")]
    CardinalityOverflow { count: u128, cap: u128 },

    #[error("invalid space parameters: {0}")]
    InvalidSpaceParams(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("output is not a permutation of the keypoint indices")]
    NonPermutationOutput,

    #[error("proposal set is empty")]
    EmptyProposalSet,

    #[error("beta must lie in [0, 1), got {0}")]
    InvalidBeta(f64),

    #[error("invalid scale: {0}")]
    InvalidScale(String),

    #[error("hill climb exceeded {cap} steps")]
    StepCapExceeded { cap: usize },

    #[error("distribution supports differ")]
    SupportMismatch,

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
