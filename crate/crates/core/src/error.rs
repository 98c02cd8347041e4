//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the bound and estimator machinery.
///
/// Invalid user inputs are reported as values; panics indicate programming
/// errors (inconsistent buffer sizes, broken internal invariants).
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a precondition (non-finite entries, bad dimensions, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two operands had incompatible dimensions.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A covariance matrix was not positive definite (Cholesky failed).
    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    /// A matrix required to be invertible was singular or too ill-conditioned.
    #[error("conditioning: {0}")]
    Conditioning(String),

    /// The model does not support the requested operation.
    #[error("capability: {0}")]
    Capability(String),

    /// A function evaluation produced a non-finite value.
    #[error("evaluation: {0}")]
    Evaluation(String),

    /// A value left the domain of a function (e.g. log of a non-positive number).
    #[error("domain: {0}")]
    Domain(String),

    /// A Monte Carlo ensemble is unusable (too many excluded trials).
    #[error("ensemble invalid: {0}")]
    EnsembleInvalid(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
