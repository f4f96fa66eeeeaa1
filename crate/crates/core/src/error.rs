use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural problem with an input file (header, date columns).
    #[error("format error: {0}")]
    Format(String),

    /// A single row could not be parsed. `row` is the 1-based data row index.
    #[error("parse error at row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("conflicting records for region {region} on {date}")]
    Conflict { region: String, date: String },

    /// Refusal to emit output that breaks a forecast invariant.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient history: need {needed}, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
