use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The fixed-point map is undefined at this point (vanishing denominator).
    #[error("degenerate point: {0}")]
    DegeneratePoint(String),

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(expected: usize, got: usize) -> Error {
    Error::InvalidInput(format!(
        "dimension mismatch: expected {expected}, got {got}"
    ))
}
