//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by geometry, model, sampling, training, and dataset code.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had a different size than the operation requires.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The Jacobian columns are numerically dependent, so the tangent space
    /// (and with it the normal projection) is not defined.
    #[error("rank-deficient Jacobian: smallest eigenvalue of J^T J is {min_eig} vs largest {max_eig}")]
    RankDeficient { min_eig: f64, max_eig: f64 },

    /// Base point and sample coincide; the reach ratio is undefined there.
    #[error("duplicate point: sample lies within {tolerance} of the base point")]
    DuplicatePoint { tolerance: f64 },

    /// No usable samples remained after filtering duplicates.
    #[error("empty sample set: no sample survived duplicate filtering")]
    EmptySampleSet,

    /// Fewer distinct points than the operation needs.
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    /// A value that must be finite (input, activation, or loss) was not.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    /// Training produced a non-finite loss; the model keeps the weights from
    /// the last completed epoch.
    #[error("non-finite loss at epoch {epoch}; last good checkpoint retained")]
    NonFiniteLoss { epoch: usize },

    /// A scalar argument was outside its documented range.
    #[error("invalid argument {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// A cell in a point-cloud CSV failed to parse as a number.
    #[error("parse error at row {row}, column {col}: {message}")]
    ParseError {
        row: usize,
        col: usize,
        message: String,
    },

    /// Rows of a point-cloud CSV disagree on the number of columns.
    #[error("ragged rows in CSV: row {row} has {got} columns, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        got: usize,
    },

    /// Model file contents violate the persistence schema.
    #[error("invalid model file: {reason}")]
    InvalidModelFile { reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
