use crate::coherence::EctResult;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("correlation matrix is not positive semidefinite (eigenvalue {min_eigenvalue:e})")]
    NonPsd { min_eigenvalue: f64 },
    #[error("custom correlation has {available} lags, lag {requested} requested")]
    CorrelationTooShort { requested: usize, available: usize },
    #[error("effective coherence time did not converge by k = {}", partial.k_used)]
    NotConverged { partial: EctResult },
    #[error("quadratic form decreased with history length at k = {k}")]
    NonMonotone { k: usize },
    #[error("channel is perfectly predictable at this precision (1 - q = {one_minus_q:e})")]
    DegenerateEstimation { one_minus_q: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("beta = {beta} outside [1, {max}]")]
    InvalidBeta { beta: f64, max: f64 },
    #[error("operation requires a zero-mean channel")]
    NonZeroMean,
    #[error("linear solve failed: {0}")]
    Factorization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
