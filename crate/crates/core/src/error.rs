use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The recursion produced a non-finite iterate or left the `|w| <= 1e6` ball.
    #[error("iterates diverged after index {last_finite_index}")]
    Diverged { last_finite_index: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("negative-curvature subspace is empty")]
    EmptyNegativeSubspace,

    /// Assumption on saddle noise fails: no noise along the descent directions.
    #[error("projected saddle noise is zero; escape is not guaranteed")]
    NoSaddleNoise,

    #[error("trajectory never enters the strict-saddle region")]
    NeverInSaddleRegion,

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("ensemble members were produced with different configurations")]
    MixedConfigs,

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
