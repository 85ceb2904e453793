use std::io;

use thiserror::Error;

/// Errors produced by the training engine and its I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    /// A step size makes the SGD shrink factor `1 - eta * lambda2` non-positive.
    #[error("invalid rate: eta * lambda2 = {product} at step {step}; SGD with L2 requires eta0 * l2 < 1")]
    InvalidRate { step: u64, product: f64 },

    /// A cache lookup outside `[base - 1, base + high_water]`.
    #[error("step {step} outside cached range [{lo}, {hi}]")]
    OutOfRange { step: i64, lo: i64, hi: i64 },

    /// A table the cache was not asked to maintain.
    #[error("schedule table {0:?} is not maintained by this cache")]
    TableNotMaintained(crate::schedule::Table),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("feature index {index} out of range for dimensionality {dims}")]
    DimensionMismatch { index: usize, dims: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
