use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::Gender;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest line {line}: {message}")]
    Manifest { line: u64, message: String },

    #[error("insufficient {gender} subjects: need {needed} with at least {images_per_subject} images, have {available}")]
    InsufficientSubjects {
        gender: Gender,
        needed: usize,
        available: usize,
        images_per_subject: usize,
    },

    #[error("subject {subject} has {count} images, which does not admit a {ratio} split")]
    SplitCount {
        subject: String,
        count: usize,
        ratio: String,
    },

    #[error("unsupported magic {0:?}")]
    UnsupportedMagic(String),

    #[error("malformed image: {0}")]
    Image(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True when the failure comes from the input data (missing files, malformed
    /// manifests, pools too small for a protocol) rather than from a bad request.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Manifest { .. }
                | Error::InsufficientSubjects { .. }
                | Error::SplitCount { .. }
                | Error::UnsupportedMagic(_)
                | Error::Image(_)
                | Error::Degenerate(_)
                | Error::ModelFormat(_)
                | Error::Csv(_)
        )
    }
}
