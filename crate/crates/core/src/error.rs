use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bad magic: expected \"MDS1\", found {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("truncated MDS1 payload: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated {
        offset: usize,
        needed: usize,
        len: usize,
    },

    #[error("malformed MDS1 file: {0}")]
    Malformed(String),

    #[error("label {label} of sample {index} is not below class count {class_count}")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        class_count: u32,
    },

    #[error("PGM error in {path}: {reason}")]
    Pgm { path: PathBuf, reason: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotSymmetric { .. } | Error::Singular(_) | Error::NonFinite(_)
        )
    }
}
