use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rectangle does not intersect the {width}x{height} canvas")]
    EmptyIntersection { width: u32, height: u32 },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("joint {0} is missing")]
    MissingJoint(&'static str),

    #[error("no candidate limb has all of its joints present")]
    NoRotatableLimb,

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mask is empty")]
    EmptyMask,

    #[error("image is empty")]
    EmptyImage,

    #[error("person {0} has no foreground pixels in its parsing map")]
    EmptyPerson(u32),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("generation exhausted after {attempts} attempts: {last}")]
    GenerationExhausted { attempts: u32, last: String },

    #[error("{file}: {message}")]
    Schema { file: PathBuf, message: String },

    #[error("missing image {0}")]
    MissingImage(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed tensor file: {0}")]
    TensorFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
