use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid neighborhood size {0}: must be odd and at least 3")]
    InvalidNeighborhood(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input too small: {0}")]
    InputTooSmall(String),

    #[error("single-class dataset: {0}")]
    SingleClass(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing directory {}", .0.display())]
    MissingDir(PathBuf),

    #[error("failed to decode {}: {msg}", path.display())]
    Decode { path: PathBuf, msg: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            err,
        }
    }
}
