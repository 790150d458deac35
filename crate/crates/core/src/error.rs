use thiserror::Error;

/// Errors raised anywhere in the segmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input columns are missing or malformed.
    #[error("schema error: {0}")]
    Schema(String),
    /// Input parses but violates a data invariant (ordering, completeness).
    #[error("integrity error: {0}")]
    Integrity(String),
    /// The caller asked for something the operation cannot do.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    /// Input has no usable variation (constant series, too few samples).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    /// A value is outside the mathematical domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A pipeline stage produced an unusable result, e.g. no stationary source.
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
