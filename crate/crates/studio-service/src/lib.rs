//! Scene manipulation service: hallucinate a target look, transfer it onto a photo.

pub mod api;
pub mod error;
pub mod pipeline;
pub mod registry;
pub mod session;
pub mod wire;

pub use api::{router, AppState, OPENAPI_YAML};
pub use error::{Result, StudioError};
pub use pipeline::{fit_layout, hallucinate, manipulate, sweep, validate_attributes, validate_layout, ManipulateInput, ManipulateOutput};
pub use registry::{CheckpointInfo, LoadedModel, Registry, CHECKPOINT_ENV, DEFAULT_MODEL_FILE};
pub use session::{rasterize, LayoutEdit, SessionState, UndoEntry, DEFAULT_UNDO_CAPACITY};
