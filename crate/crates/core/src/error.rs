use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("particles {i} and {j} coincide (separation {distance:e})")]
    Collision { i: usize, j: usize, distance: f64 },

    #[error("invalid masses: {0}")]
    InvalidMasses(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mismatched input: {0}")]
    Mismatch(String),

    #[error("malformed trajectory csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
