//! Error types shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or filter-bank axis does not match what an operation expects.
    #[error("shape mismatch on axis `{axis}`: expected {expected}, got {actual}")]
    Shape {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A configuration value is outside its supported range.
    #[error("invalid configuration: {0}")]
    Validation(String),

    /// Internal consistency violation in a stored or loaded structure.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A layer geometry the PE array does not support.
    #[error("unsupported layer shape: {0}")]
    UnsupportedShape(String),

    /// Episode sampling cannot satisfy the requested shot/query counts.
    #[error("class {class} has only {available} samples, need {needed}")]
    InsufficientSamples {
        class: u32,
        available: usize,
        needed: usize,
    },

    /// Malformed binary file (bad magic, truncated payload, ...).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
