use axum::http::StatusCode;
use thiserror::Error;

pub type Result<T, E = StudioError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StudioError {
    #[error("no checkpoint loaded")]
    NoCheckpoint,

    #[error("invalid request: {0}")]
    Validation(String),

    #[error("{0} not found")]
    NotFound(String),

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StudioError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::NoCheckpoint => StatusCode::CONFLICT,
            Self::Validation(_) => StatusCode::BAD_REQUEST,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Checkpoint(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::Stage { .. } | Self::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Self::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

impl From<scene_data::DataError> for StudioError {
    fn from(e: scene_data::DataError) -> Self {
        Self::Validation(e.to_string())
    }
}
