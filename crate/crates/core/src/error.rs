//! Error type shared by all solver stages.

use thiserror::Error;

/// Errors produced by grid construction, the forward solver and the inverse solver.
#[derive(Debug, Error)]
pub enum RteError {
    /// Invalid configuration (bad parameter values, non-divisible grid steps,
    /// unknown config keys, unknown phantom names).
    #[error("configuration error: {0}")]
    Config(String),

    /// Measured data violates a domain requirement (e.g. non-positive boundary
    /// values fed to the log transform).
    #[error("data error: {0}")]
    Data(String),

    /// A numerical stage failed (non-positive radiance, singular matrix,
    /// exp overflow in an optimizer iterate).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File I/O while reading masks or writing outputs.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RteError>;
