use thiserror::Error;

use crate::tensor::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("volume too thin: sagittal extent {0} must exceed 40")]
    TooThin(usize),

    #[error("magnitude level {0} outside [0, 30]")]
    LevelOutOfRange(i64),

    #[error("invalid policy spec: {0}")]
    Policy(String),

    #[error("image {height}x{width} smaller than crop size {size}")]
    CropTooLarge { height: usize, width: usize, size: usize },

    #[error("class {label} has {count} subjects, need at least 5")]
    ClassTooSmall { label: u8, count: usize },

    #[error("unknown subject id {0:?}")]
    UnknownSubject(String),

    #[error("unknown item {0:?}")]
    UnknownItem(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no correct slice predictions; weights undefined")]
    NoCorrectPredictions,

    #[error("subject {subject:?}: {reason}")]
    SliceCoverage { subject: String, reason: String },

    #[error("schema violation: {0}")]
    Schema(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
