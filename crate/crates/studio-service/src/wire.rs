//! JSON bodies and base64 PNG payload codecs.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{GrayImage, ImageFormat};
use phototransfer::{TimingRow, TransferConfig};
use scene_data::scene::{from_rgb8, to_rgb8};
use scene_data::{SceneImage, SemanticLayout};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StudioError};
use crate::session::LayoutEdit;

fn bad(what: &str) -> impl Fn(String) -> StudioError + '_ {
    move |e| StudioError::Validation(format!("{what}: {e}"))
}

/// RGB8 PNG, base64.
pub fn encode_image(image: &SceneImage) -> String {
    let mut buf = Cursor::new(Vec::new());
    to_rgb8(image).write_to(&mut buf, ImageFormat::Png).expect("PNG encoding into memory");
    STANDARD.encode(buf.into_inner())
}

pub fn decode_image(payload: &str) -> Result<SceneImage> {
    let bytes = STANDARD.decode(payload.trim()).map_err(|e| bad("image")(e.to_string()))?;
    let img = image::load_from_memory(&bytes).map_err(|e| bad("image")(e.to_string()))?;
    Ok(from_rgb8(&img.to_rgb8()))
}

/// Single-channel PNG whose pixel values are class labels, base64.
pub fn encode_layout(layout: &SemanticLayout) -> String {
    let (h, w) = layout.dim();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([layout.get(y as usize, x as usize)]));
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("PNG encoding into memory");
    STANDARD.encode(buf.into_inner())
}

pub fn decode_layout(payload: &str, num_classes: u32) -> Result<SemanticLayout> {
    let bytes = STANDARD.decode(payload.trim()).map_err(|e| bad("layout")(e.to_string()))?;
    let img = image::load_from_memory(&bytes).map_err(|e| bad("layout")(e.to_string()))?;
    if img.color().channel_count() != 1 {
        return Err(StudioError::Validation("layout must be a single-channel label image".into()));
    }
    let gray = img.to_luma8();
    let labels = ndarray::Array2::from_shape_fn((gray.height() as usize, gray.width() as usize), |(y, x)| gray.get_pixel(x as u32, y as u32)[0]);
    Ok(SemanticLayout::new(labels, num_classes)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HallucinateRequest {
    pub layout: String,
    pub attributes: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HallucinateResponse {
    pub image: String,
    /// The square layout actually fed to the generator.
    pub layout: String,
    pub checkpoint_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRequest {
    pub layout: String,
    pub attributes: Vec<f64>,
    pub attribute: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResponse {
    pub attribute: String,
    pub values: Vec<f64>,
    pub images: Vec<String>,
    pub checkpoint_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManipulateRequest {
    pub image: String,
    /// Omitted when `session` supplies the layout.
    #[serde(default)]
    pub layout: Option<String>,
    #[serde(default)]
    pub session: Option<String>,
    /// Defaults to the session's attributes.
    #[serde(default)]
    pub attributes: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub dump_stages: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
    pub checkpoint_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageImage {
    pub stage: String,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManipulateResponse {
    pub image: String,
    pub hallucination: String,
    pub stages: Vec<StageImage>,
    pub timing: TimingRow,
    pub checkpoint_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub state: JobState,
    pub checkpoint_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ManipulateResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub layout: Option<String>,
    /// Blank canvas label when no layout is given.
    #[serde(default)]
    pub fill_label: u8,
    #[serde(default)]
    pub attributes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutEditRequest {
    pub edit: LayoutEdit,
    pub label: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributesRequest {
    pub attributes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRequest {
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionResponse {
    pub id: String,
    pub layout: String,
    pub attributes: Vec<f64>,
    pub undo_depth: usize,
    /// Pixels covered by the last edit request.
    #[serde(default)]
    pub changed: usize,
    #[serde(default)]
    pub undone: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_hallucination: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_manipulation: Option<String>,
    pub checkpoint_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributesResponse {
    pub names: Vec<String>,
    pub checkpoint_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadCheckpointRequest {
    pub path: String,
}
