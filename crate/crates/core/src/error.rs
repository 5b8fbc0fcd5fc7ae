use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("invalid variance {0}: diagonal entries must be finite and positive")]
    InvalidVariance(f64),

    #[error("cosine of a zero vector is undefined")]
    ZeroVector,

    #[error("internal consistency error: cosine {0} lies outside [-1, 1]")]
    CosineOutOfRange(f64),

    #[error("current state is outside the support of the target (log density {0})")]
    OutsideSupport(f64),

    #[error("proposal {index}: kernel log density is not finite")]
    NonFiniteKernelDensity { index: usize },

    #[error("divergence at leapfrog jump {jump}")]
    Divergence { jump: usize },

    #[error("the target does not provide a gradient")]
    GradientUnavailable,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: row {row}: {msg}")]
    Parse { path: String, row: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
