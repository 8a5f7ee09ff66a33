use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("edge list line {line}: {message}")]
    EdgeList { line: usize, message: String },

    #[error("graph has no interior vertex")]
    NoInterior,

    #[error("matrix is not positive definite (pivot {pivot} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("linear solve did not reach tolerance (relative residual {residual:e})")]
    LinearSolve { residual: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (best residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid cell: {0}")]
    Cell(String),

    #[error("invalid tube profile: {0}")]
    Tube(String),

    #[error("gluing failed: {0}")]
    Glue(String),

    #[error("cutoff collar missing: {0}")]
    CollarMissing(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
