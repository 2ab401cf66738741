//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/image extents do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value is outside its documented domain.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A binary file does not follow its declared layout.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A computation produced or received NaN/Inf.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Input is valid in shape but mathematically empty (e.g. an all-zero
    /// bag that cannot be normalized).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A caller violated a documented precondition (e.g. unnormalized target).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A BoW cache was built under a different (encoder, vocabulary, flags)
    /// tuple; it must be rebuilt, never silently reused.
    #[error(
        "stale BoW cache: expected config hash {expected:016x}, file has {found:016x}; \
         rebuild with `bownet cache-bow`"
    )]
    StaleCache { expected: u64, found: u64 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
