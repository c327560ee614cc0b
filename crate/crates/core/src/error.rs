use thiserror::Error;

/// Errors raised by the segmentation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance matrix is singular after regularization")]
    SingularCovariance,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("directional observation is not unit-norm (norm = {norm})")]
    NotUnitNorm { norm: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{context}: {source}")]
    Image {
        context: String,
        #[source]
        source: image::ImageError,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SingularCovariance | Error::Degenerate(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
