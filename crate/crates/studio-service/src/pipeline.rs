//! Hallucinate, sweep and manipulate against a loaded checkpoint.

use std::time::Instant;

use ndarray::Array2;
use phototransfer::{transfer_pipeline, StageOutput, TimingRow, TransferConfig, TransferError};
use scene_data::{AttributeVector, SceneImage, SemanticLayout};

use crate::error::{Result, StudioError};
use crate::registry::LoadedModel;

pub const SWEEP_MAX_VALUES: usize = 16;

/// Checks count and range against the checkpoint's attribute list.
pub fn validate_attributes(model: &LoadedModel, values: &[f64]) -> Result<AttributeVector> {
    let names = model.attribute_names();
    if values.len() != names.len() {
        return Err(StudioError::Validation(format!("expected {} attribute values, got {}", names.len(), values.len())));
    }
    Ok(AttributeVector::new(values.to_vec(), names.to_vec())?)
}

pub fn validate_layout(model: &LoadedModel, layout: &SemanticLayout) -> Result<()> {
    let c = model.num_classes();
    if let Some(bad) = layout.labels().iter().find(|&&l| u32::from(l) >= c) {
        return Err(StudioError::Validation(format!("label {bad} is outside the checkpoint's {c} classes")));
    }
    if layout.height() == 0 || layout.width() == 0 {
        return Err(StudioError::Validation("empty layout".into()));
    }
    Ok(())
}

/// Nearest-neighbour resize of the height to `side`, edge padding if narrow, centered square crop.
pub fn fit_layout(layout: &SemanticLayout, side: usize) -> Result<SemanticLayout> {
    let (h, w) = layout.dim();
    let scaled = if h == side { layout.clone() } else {
        let new_w = ((w as f64 * side as f64 / h as f64).round() as usize).max(1);
        layout.resize_nearest(side, new_w)
    };
    let w = scaled.width();
    if w >= side {
        return Ok(scaled.crop(0, (w - side) / 2, side, side)?);
    }
    let left = (side - w) / 2;
    let labels = Array2::from_shape_fn((side, side), |(y, x)| scaled.get(y, x.saturating_sub(left).min(w - 1)));
    Ok(SemanticLayout::new(labels, scaled.num_classes())?)
}

/// Fine-scale image for a layout of any size, plus the square layout it was generated from.
pub fn hallucinate(model: &LoadedModel, layout: &SemanticLayout, attributes: &[f64], seed: u64) -> Result<(SceneImage, SemanticLayout)> {
    validate_layout(model, layout)?;
    let attributes = validate_attributes(model, attributes)?;
    let fitted = fit_layout(layout, model.resolution())?;
    let image = model
        .model
        .hallucinate(&fitted, &attributes, seed)
        .map_err(|e| StudioError::Stage { stage: "hallucinate", message: e.to_string() })?;
    Ok((image, fitted))
}

/// One hallucination per value of `attribute`, all with the same noise.
pub fn sweep(model: &LoadedModel, layout: &SemanticLayout, attributes: &[f64], attribute: &str, values: &[f64], seed: u64) -> Result<Vec<SceneImage>> {
    let base = validate_attributes(model, attributes)?;
    let idx = base.index_of(attribute).ok_or_else(|| StudioError::Validation(format!("unknown attribute `{attribute}`")))?;
    if values.is_empty() || values.len() > SWEEP_MAX_VALUES {
        return Err(StudioError::Validation(format!("a sweep takes 1 to {SWEEP_MAX_VALUES} values")));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(StudioError::Validation(format!("sweep value {v} is outside [0, 1]")));
    }
    validate_layout(model, layout)?;
    values
        .iter()
        .map(|&v| {
            let mut a = base.values().to_vec();
            a[idx] = v;
            hallucinate(model, layout, &a, seed).map(|(img, _)| img)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ManipulateInput {
    pub image: SceneImage,
    pub layout: SemanticLayout,
    pub attributes: Vec<f64>,
    pub seed: u64,
    pub transfer: TransferConfig,
}

#[derive(Debug, Clone)]
pub struct ManipulateOutput {
    pub output: SceneImage,
    pub hallucination: SceneImage,
    pub hallucination_layout: SemanticLayout,
    pub stages: Vec<StageOutput>,
    pub timing: TimingRow,
}

pub fn validate_manipulation(model: &LoadedModel, input: &ManipulateInput) -> Result<()> {
    let (h, w, c) = input.image.dim();
    if c != 3 || h == 0 || w == 0 {
        return Err(StudioError::Validation(format!("image must be H x W x 3, got {h} x {w} x {c}")));
    }
    if input.layout.dim() != (h, w) {
        return Err(StudioError::Validation(format!("layout {:?} does not match image {h} x {w}", input.layout.dim())));
    }
    validate_layout(model, &input.layout)?;
    validate_attributes(model, &input.attributes)?;
    input.transfer.validate().map_err(|e| StudioError::Validation(e.to_string()))
}

/// Hallucinates the target look on the input's layout, then transfers it onto the input.
pub fn manipulate(model: &LoadedModel, input: &ManipulateInput) -> Result<ManipulateOutput> {
    validate_manipulation(model, input)?;
    let t0 = Instant::now();
    let (hallucination, fitted) = hallucinate(model, &input.layout, &input.attributes, input.seed)?;
    let gen_secs = t0.elapsed().as_secs_f64();
    let result = transfer_pipeline(&input.image, &input.layout, &hallucination, &fitted, &input.transfer).map_err(stage_error)?;
    let timing = result.timing_row(gen_secs);
    Ok(ManipulateOutput { output: result.output, hallucination, hallucination_layout: fitted, stages: result.stages, timing })
}

fn stage_error(e: TransferError) -> StudioError {
    match e {
        TransferError::Stage { stage, source } => StudioError::Stage { stage, message: source.to_string() },
        other => StudioError::Stage { stage: "transfer", message: other.to_string() },
    }
}
