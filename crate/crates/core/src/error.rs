use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: expected {0}")]
    MissingFile(PathBuf),

    #[error("corrupt data in {path}: {reason}")]
    CorruptData { path: PathBuf, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid image batch: {0}")]
    InvalidBatch(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("label {label} out of range for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },

    #[error("label count {labels} does not match image count {images}")]
    LengthMismatch { images: usize, labels: usize },

    #[error("unsupported channel conversion {from} -> {to}")]
    UnsupportedConversion { from: usize, to: usize },

    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),

    #[error("architecture `{0}` has no global-average-pool + linear head")]
    UnsupportedArchitecture(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset has {dataset} classes but model predicts {model}")]
    ClassCountMismatch { dataset: usize, model: usize },

    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("{what}: expected {expected} entries, got {actual}")]
    CountMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptData {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
