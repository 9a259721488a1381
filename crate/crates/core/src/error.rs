use thiserror::Error;

/// Errors raised by every fitting, solving and I/O routine in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("singular triangular factor (zero diagonal at {index})")]
    Singular { index: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("singular filter: {0}")]
    SingularFilter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("label {label} is not contiguous with the {known} known classes")]
    NonContiguousLabel { label: usize, known: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("model has not seen any example")]
    Untrained,

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
