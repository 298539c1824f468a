use thiserror::Error;

/// Errors produced by the symmetric-subspace machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("propagation did not converge (achieved residual {residual:.3e}): {reason}")]
    NonConvergence { residual: f64, reason: String },

    #[error("disentangling branch failure in `{expr}`: {detail}")]
    Branch { expr: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
