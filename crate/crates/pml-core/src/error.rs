//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by workload construction, bound evaluation, calibration and
/// the exact oracle.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix entry at row {row}, column {col} is not finite")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("invalid workload shape: {0}")]
    InvalidShape(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("alpha must satisfy 0 < alpha <= 1/k, got alpha={alpha}, k={k}")]
    InvalidAlpha { alpha: f64, k: usize },

    #[error("noise scale b must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("workload/prior dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("exact bound needs 2^m subset enumeration: m={m} exceeds cap {cap}")]
    SubsetExplosion { m: usize, cap: usize },

    #[error("subset cap {0} outside the supported range 1..=63")]
    InvalidSubsetCap(usize),

    #[error("histogram enumeration has {states} states, above the cap {cap}")]
    EnumerationTooLarge { states: u128, cap: u128 },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid calibration parameter: {0}")]
    InvalidCalibration(String),

    #[error("bracket expansion exceeded 2^64 times the initial guess (eps={eps})")]
    BracketFailure { eps: f64 },

    #[error("workload CSV, line {line}, column {column}: {message}")]
    CsvParse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
