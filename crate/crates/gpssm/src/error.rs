use std::path::PathBuf;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Cholesky factorization failed even after the jitter escalation ladder.
    #[error("matrix of size {size} is not positive definite (jitter up to {max_jitter:.3e} exhausted)")]
    NotPositiveDefinite { size: usize, max_jitter: f64 },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("invalid gaussian: {context}")]
    InvalidGaussian { context: String },

    /// Closed-form kernel expectations exist only for the squared-exponential family.
    #[error("kernel family `{family}` has no closed-form expectations; use the quadrature path")]
    UnsupportedKernel { family: String },

    /// Tensor-product quadrature is limited to a few uncertain input dimensions.
    #[error("quadrature limited to {max} uncertain dimensions, got {dim}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("non-finite gradient at epoch {epoch}")]
    NonFiniteGradient { epoch: usize },

    #[error("non-finite score at control candidate {candidate:?}")]
    NonFiniteScore { candidate: Vec<f64> },

    #[error("simulation produced a non-finite state")]
    NonFiniteState,

    #[error("length mismatch: {context}")]
    LengthMismatch { context: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dim(context: impl Into<String>) -> Self {
        Error::DimensionMismatch { context: context.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
