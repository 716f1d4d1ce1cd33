use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad IDX magic 0x{magic:08x}")]
    BadMagic { path: PathBuf, magic: u32 },

    #[error("{path}: truncated, expected {expected} bytes but found {actual}")]
    Truncated { path: PathBuf, expected: usize, actual: usize },

    #[error("{path}: declared dimensions {dims:?} overflow")]
    DimensionOverflow { path: PathBuf, dims: Vec<u32> },

    #[error("{path}: size {size} is not a whole number of {record}-byte records")]
    RecordSize { path: PathBuf, size: usize, record: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, ZooError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> ZooError {
    let path = path.into();
    move |source| ZooError::Io { path, source }
}
