//! Crate-wide error type.

use thiserror::Error;

/// Errors reported by stores, indexes, searches, and the cost model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("negative value {value} at position {position} in a non-negative context")]
    NegativeValue { position: usize, value: f64 },

    #[error("non-finite value at position {position}")]
    NonFinite { position: usize },

    #[error("cannot normalize a zero-norm vector")]
    ZeroVector,

    #[error("id {id} out of range 1..={count}")]
    IdOutOfRange { id: usize, count: usize },

    #[error("pool range [{si}, {ei}] invalid for count {count}")]
    InvalidRange { si: usize, ei: usize, count: usize },

    #[error("similarity threshold {rho} outside (0, 2]")]
    InvalidThreshold { rho: f64 },

    #[error("bad magic: expected {expected:?}, found {actual:?}")]
    BadMagic { expected: [u8; 4], actual: [u8; 4] },

    #[error("unsupported container version {version}")]
    UnsupportedVersion { version: u32 },

    #[error("truncated file: expected {expected} more bytes")]
    Truncated { expected: u64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("index does not match store: {reason}")]
    StoreMismatch { reason: String },

    #[error("query has negative coordinates but the index holds no minimum vectors")]
    UnsupportedNegativeQuery,

    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("sample {value} at position {position} outside [0, 1]")]
    OutOfRange { position: usize, value: f64 },

    #[error("sample mean {mean} admits no fit inside the bracket (need mean in (0, 0.5))")]
    DegenerateSamples { mean: f64 },

    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("no pools with a positive member dot product")]
    NoValidPools,

    #[error("could not construct a vector hitting similarity band [{target}, {target} + 0.02]")]
    InfeasibleTarget { target: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
