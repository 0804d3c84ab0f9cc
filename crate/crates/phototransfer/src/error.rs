use thiserror::Error;

pub type Result<T, E = TransferError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("shape contract violated: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty region mask")]
    EmptyRegion,

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { solver: &'static str, iterations: usize, residual: f64 },

    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: &'static str, source: Box<TransferError> },

    #[error(transparent)]
    Data(#[from] scene_data::DataError),
}

impl TransferError {
    pub fn in_stage(self, stage: &'static str) -> Self {
        TransferError::Stage { stage, source: Box::new(self) }
    }
}
