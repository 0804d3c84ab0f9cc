//! Stylize, smooth and enhance, with per-stage outputs and timings.

use std::fmt;
use std::time::Instant;

use ndarray::Array3;
use scene_data::SemanticLayout;
use serde::{Deserialize, Serialize};

use crate::bilateral::cross_bilateral;
use crate::error::{Result, TransferError};
use crate::poisson::screened_poisson;
use crate::smooth::{smooth_affinity, DEFAULT_AFFINITY_SIGMA};
use crate::wct::stylize;

/// Feature space in which region statistics are matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    #[default]
    Pixels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub alpha: f64,
    pub sigma_spatial: f64,
    pub sigma_range: f64,
    pub lambda_f: f64,
    pub affinity_sigma: f64,
    /// Run the cross bilateral filter between smoothing and enhancement.
    pub use_bilateral: bool,
    pub per_label: bool,
    pub features: FeatureSource,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            sigma_spatial: 2.0,
            sigma_range: 0.1,
            lambda_f: 1.0,
            affinity_sigma: DEFAULT_AFFINITY_SIGMA,
            use_bilateral: false,
            per_label: true,
            features: FeatureSource::Pixels,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TransferError::Config(m));
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if !(self.sigma_spatial > 0.0) {
            return bad(format!("sigma_spatial must be positive, got {}", self.sigma_spatial));
        }
        if !(self.sigma_range >= 0.0) {
            return bad(format!("sigma_range must be non-negative, got {}", self.sigma_range));
        }
        if !(self.lambda_f > 0.0 && self.lambda_f.is_finite()) {
            return bad(format!("lambda_f must be positive, got {}", self.lambda_f));
        }
        if !(self.affinity_sigma > 0.0) {
            return bad(format!("affinity_sigma must be positive, got {}", self.affinity_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stylize,
    Smooth,
    Bilateral,
    Poisson,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Stylize => "stylize",
            Stage::Smooth => "smooth",
            Stage::Bilateral => "bilateral",
            Stage::Poisson => "poisson",
        }
    }

    /// Stylization and smoothing form the transfer step; the rest is post-processing.
    pub fn is_post_processing(self) -> bool {
        matches!(self, Stage::Bilateral | Stage::Poisson)
    }
}

#[derive(Debug, Clone)]
pub struct StageOutput {
    pub stage: Stage,
    pub image: Array3<f64>,
    pub seconds: f64,
}

/// One row of the running-time table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub width: usize,
    pub height: usize,
    pub generator: f64,
    pub style_transfer: f64,
    pub post_processing: f64,
}

impl TimingRow {
    pub const HEADER: &'static str = "Resolution | SGN | Style Transfer | Post-Processing | Total";

    pub fn total(&self) -> f64 {
        self.generator + self.style_transfer + self.post_processing
    }
}

impl fmt::Display for TimingRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} x {} | {:.2} | {:.2} | {:.2} | {:.2}",
            self.width,
            self.height,
            self.generator,
            self.style_transfer,
            self.post_processing,
            self.total()
        )
    }
}

#[derive(Debug, Clone)]
pub struct TransferResult {
    pub output: Array3<f64>,
    pub stages: Vec<StageOutput>,
}

impl TransferResult {
    pub fn stage(&self, stage: Stage) -> Option<&StageOutput> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// Timing row with the given generator time filled in.
    pub fn timing_row(&self, generator_seconds: f64) -> TimingRow {
        let (h, w, _) = self.output.dim();
        let (mut st, mut pp) = (0.0, 0.0);
        for s in &self.stages {
            if s.stage.is_post_processing() {
                pp += s.seconds;
            } else {
                st += s.seconds;
            }
        }
        TimingRow { width: w, height: h, generator: generator_seconds, style_transfer: st, post_processing: pp }
    }
}

fn timed<T>(stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage.name()))?;
    let secs = start.elapsed().as_secs_f64();
    log::debug!("{} took {:.3}s", stage.name(), secs);
    Ok((out, secs))
}

pub fn transfer_pipeline(
    input: &Array3<f64>,
    input_layout: &SemanticLayout,
    style: &Array3<f64>,
    style_layout: &SemanticLayout,
    cfg: &TransferConfig,
) -> Result<TransferResult> {
    cfg.validate()?;
    let mut stages = Vec::with_capacity(4);
    let (stylized, t) = timed(Stage::Stylize, || stylize(input, style, input_layout, style_layout, cfg.per_label))?;
    stages.push(StageOutput { stage: Stage::Stylize, image: stylized, seconds: t });
    let (smoothed, t) = timed(Stage::Smooth, || smooth_affinity(&stages[0].image, input, cfg.alpha, cfg.affinity_sigma))?;
    stages.push(StageOutput { stage: Stage::Smooth, image: smoothed, seconds: t });
    if cfg.use_bilateral {
        let prev = &stages.last().expect("stage").image;
        let (filtered, t) = timed(Stage::Bilateral, || cross_bilateral(prev, input, cfg.sigma_spatial, cfg.sigma_range))?;
        stages.push(StageOutput { stage: Stage::Bilateral, image: filtered, seconds: t });
    }
    let prev = &stages.last().expect("stage").image;
    let (enhanced, t) = timed(Stage::Poisson, || screened_poisson(prev, input, cfg.lambda_f))?;
    let output = enhanced.mapv(|v| v.clamp(-1.0, 1.0));
    stages.push(StageOutput { stage: Stage::Poisson, image: enhanced, seconds: t });
    Ok(TransferResult { output, stages })
}
