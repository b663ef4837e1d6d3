//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Array dimensions do not line up (bad input shape, mismatched gradient, ...).
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An API precondition was violated (stale cache, t = 0 reads, p out of range, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced NaN/Inf; the offending update is rejected.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A data file could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    /// An experiment config failed validation. Each entry is one `field: message` diagnostic.
    #[error("invalid config:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
