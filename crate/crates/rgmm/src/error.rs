use thiserror::Error;

/// Errors raised by fitting, search, and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("dataset generation failed: {0}")]
    GenerationFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
