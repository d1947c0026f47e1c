use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimensions {height}x{width} are not divisible by grid size {k}")]
    Dimension { height: usize, width: usize, k: usize },

    #[error("expected {expected} channel(s), got {actual}")]
    Channel { expected: usize, actual: usize },

    #[error("image is already single-channel luminance")]
    AlreadyLuminance,

    #[error("invalid pixel data: {0}")]
    Pixel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("manifest validation failed: {0}")]
    Validation(String),

    #[error("manifest record {id:?}: {reason}")]
    Record { id: String, reason: String },

    #[error("unknown loss id {0:?}")]
    UnknownLoss(String),

    #[error("non-finite loss in {context}: {ledger}")]
    NonFinite { context: String, ledger: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than an internal failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFinite { .. } | Error::Image { .. }
        )
    }
}
