//! Evaluation of generated images against a test split.

use std::path::Path;

use ndarray::Array2;
use scene_data::{AttributeVector, DatasetSplit, SceneImage, SceneSample, SemanticLayout, SharedSample};
use serde::{Deserialize, Serialize};
use sgn_nets::{attribute_batch, file_hash, image_batch, SgnModel};
use sgn_train::{train_schedule, PerceptualEncoder, TrainConfig};

use crate::error::{EvalError, Result};
use crate::metrics::{attribute_mse, frechet_distance, inception_score, segmentation_accuracy, spearman};
use crate::report::MetricReport;
use crate::surrogates::Surrogates;

pub const IS_SPLITS: usize = 10;

/// Scores `generated[i]`, which was conditioned on `test[i]`'s layout and attributes.
pub fn evaluate_images(label: &str, generated: &[SceneImage], test: &[&SceneSample], surrogates: &Surrogates) -> Result<MetricReport> {
    if generated.len() != test.len() || generated.is_empty() {
        return Err(EvalError::Contract(format!("{} generated images for {} test samples", generated.len(), test.len())));
    }
    let fake = image_batch(&generated.iter().collect::<Vec<_>>())?;
    let real = image_batch(&test.iter().map(|s| &s.image).collect::<Vec<_>>())?;
    let (probs, fake_feats) = surrogates.embedder.embed(&fake)?;
    let (_, real_feats) = surrogates.embedder.embed(&real)?;
    let splits = IS_SPLITS.min(generated.len());
    let (is_mean, is_std) = inception_score(&probs, splits)?;
    let fid = frechet_distance(&real_feats, &fake_feats)?;
    let targets = attribute_batch(&test.iter().map(|s| &s.attributes).collect::<Vec<_>>())?;
    let targets: Array2<f64> = targets.into_dimensionality().map_err(|e| EvalError::Contract(e.to_string()))?;
    let predicted = surrogates.regressor.predict_attributes(&fake)?;
    let mse = attribute_mse(&predicted, &targets)?;
    let labels = surrogates.segmenter.segment(&fake)?;
    let layouts: Vec<&SemanticLayout> = test.iter().map(|s| &s.layout).collect();
    let seg = segmentation_accuracy(&labels, &layouts)?;
    Ok(MetricReport {
        label: label.to_string(),
        inception_score: is_mean,
        inception_score_std: is_std,
        fid,
        attribute_mse: mse,
        segmentation_accuracy: seg,
        generated_count: generated.len(),
        real_count: test.len(),
        checkpoint_hash: None,
    })
}

/// Metrics of the real test images scored as if generated.
pub fn evaluate_real(test: &[&SceneSample], surrogates: &Surrogates) -> Result<MetricReport> {
    let images: Vec<SceneImage> = test.iter().map(|s| s.image.clone()).collect();
    evaluate_images("real", &images, test, surrogates)
}

/// One hallucination per test sample, with noise seed `seed + i`.
pub fn generate_for(model: &SgnModel, test: &[&SceneSample], seed: u64) -> Result<Vec<SceneImage>> {
    let side = model.fine_resolution();
    test.iter()
        .enumerate()
        .map(|(i, s)| {
            if s.layout.dim() != (side, side) {
                return Err(EvalError::Contract(format!("test sample {} is {:?}, model expects {side}²", s.id, s.layout.dim())));
            }
            Ok(model.hallucinate(&s.layout, &s.attributes, seed + i as u64)?)
        })
        .collect()
}

pub fn evaluate_model(label: &str, model: &SgnModel, test: &[&SceneSample], surrogates: &Surrogates, seed: u64) -> Result<MetricReport> {
    let generated = generate_for(model, test, seed)?;
    evaluate_images(label, &generated, test, surrogates)
}

pub fn evaluate_checkpoint(path: &Path, test: &[&SceneSample], surrogates: &Surrogates, seed: u64) -> Result<MetricReport> {
    let bytes = std::fs::read(path)?;
    let model = SgnModel::from_checkpoint(&sgn_nets::Checkpoint::from_bytes(&bytes)?)?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let mut report = evaluate_model(&label, &model, test, surrogates, seed)?;
    report.checkpoint_hash = Some(file_hash(&bytes));
    Ok(report)
}

/// Mean generated luminance per commanded value of one attribute, averaged
/// over `test` layouts with their other attributes held fixed.
pub fn attribute_sweep(model: &SgnModel, test: &[&SceneSample], attribute: &str, values: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut total = 0.0;
        for (i, s) in test.iter().enumerate() {
            let a: AttributeVector = s.attributes.clone().with(attribute, v)?;
            let img = model.hallucinate(&s.layout, &a, seed + i as u64)?;
            total += scene_data::oracle::mean_luminance(&img);
        }
        out.push(total / test.len() as f64);
    }
    Ok(out)
}

/// Spearman correlation between commanded values and the swept luminance.
pub fn controllability(model: &SgnModel, test: &[&SceneSample], attribute: &str, values: &[f64], seed: u64) -> Result<(f64, Vec<f64>)> {
    let lum = attribute_sweep(model, test, attribute, values, seed)?;
    Ok((spearman(values, &lum)?, lum))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub label: String,
    pub use_rnm: bool,
    pub use_perceptual: bool,
}

/// SGN, SGN+RNM, SGN+PL, SGN+RNM+PL.
pub fn ablation_variants() -> Vec<AblationVariant> {
    [("SGN", false, false), ("SGN+RNM", true, false), ("SGN+PL", false, true), ("SGN+RNM+PL", true, true)]
        .into_iter()
        .map(|(l, r, p)| AblationVariant { label: l.into(), use_rnm: r, use_perceptual: p })
        .collect()
}

/// Trains every variant from the same base configuration and evaluates it;
/// rows follow the order of `variants`.
pub fn run_ablation(
    split: &DatasetSplit,
    base: &TrainConfig,
    variants: &[AblationVariant],
    surrogates: &Surrogates,
    encoder: Option<PerceptualEncoder>,
) -> Result<Vec<MetricReport>> {
    let train: Vec<SharedSample> = split.load_train()?;
    let test_owned = split.load_test()?;
    let test: Vec<&SceneSample> = test_owned.iter().map(|s| s.as_ref()).collect();
    variants
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.use_rnm = v.use_rnm;
            cfg.use_perceptual = v.use_perceptual;
            let enc = if v.use_perceptual { encoder.clone() } else { None };
            let outcome = train_schedule(train.clone(), &split.manifest, &cfg, None, enc)?;
            evaluate_model(&v.label, &outcome.model, &test, surrogates, cfg.seed)
        })
        .collect()
}
