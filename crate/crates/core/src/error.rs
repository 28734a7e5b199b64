use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {theta:?} outside domain [{lower:?}, {upper:?}]")]
    DomainViolation {
        theta: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("particle system degenerate: all importance weights vanished")]
    Degenerate,

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("covariance matrix not positive definite after jitter {jitter:e}")]
    Conditioning { jitter: f64 },

    #[error("surface dumps support at most 2 parameters, model has {0}")]
    UnsupportedDimension(usize),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad caller input rather than a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DomainViolation { .. }
                | Error::DimensionMismatch { .. }
                | Error::InvalidInput(_)
                | Error::UnknownModel(_)
                | Error::UnsupportedDimension(_)
        )
    }
}
