//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by kernel evaluation, sketching, and streaming updates.
#[derive(Debug, Error)]
pub enum Error {
    /// Two vectors (or a vector and a dataset) disagree on dimension.
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    /// A stream or matrix index is out of range.
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    /// A matrix that must be positive semidefinite is not, beyond tolerance.
    #[error("matrix not positive semidefinite within tolerance: {0}")]
    NotPsd(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A caller broke an API contract (e.g. estimated a dropped column).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Ground-truth function values were required but absent.
    #[error("dataset has no ground-truth values")]
    MissingTruth,

    /// An underlying LAPACK routine failed.
    #[error("linear algebra backend error: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    /// CSV ingestion failed.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// File I/O failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
