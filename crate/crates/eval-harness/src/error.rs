use thiserror::Error;

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("surrogate `{name}` not found at {path}; train the surrogates first with `evaluate --train-surrogates --data <dir>`")]
    MissingSurrogate { name: &'static str, path: String },

    #[error(transparent)]
    Net(#[from] sgn_nets::NetError),

    #[error(transparent)]
    Train(#[from] sgn_train::TrainError),

    #[error(transparent)]
    Data(#[from] scene_data::DataError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
