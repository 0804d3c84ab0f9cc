use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("label {label} does not fit in {bits} bits")]
    EncodingCapacity { label: u32, bits: u32 },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u32, num_classes: u32 },

    #[error("attribute `{name}` has value {value}, expected a value in [0, 1]")]
    AttributeOutOfRange { name: String, value: f64 },

    #[error("attribute vector has {got} entries, expected {expected}")]
    AttributeLength { expected: usize, got: usize },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("no palette entry for label {0}")]
    MissingPalette(u32),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("width {width} after resizing is smaller than target {target}")]
    TooNarrow { width: u32, target: u32 },

    #[error("split `{0}` is empty")]
    EmptySplit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

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

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io { path: path.into(), source }
    }
}
