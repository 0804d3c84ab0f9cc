use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at iteration {iteration}: {what} = {value}{}", dump.as_ref().map(|p| format!(" (state dumped to {})", p.display())).unwrap_or_default())]
    Divergence { iteration: u64, what: String, value: f64, dump: Option<PathBuf> },

    #[error("no negative available: pool has {0} sample(s)")]
    NoNegative(usize),

    #[error("shape contract violated: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("perceptual encoder accuracy {accuracy:.4} below the {floor:.2} floor; refusing to freeze")]
    QualityGate { accuracy: f64, floor: f64 },

    #[error(transparent)]
    Net(#[from] sgn_nets::NetError),

    #[error(transparent)]
    Data(#[from] scene_data::DataError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
