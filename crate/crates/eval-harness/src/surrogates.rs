//! Frozen embedder, attribute regressor and segmenter trained on the corpus.

use std::path::Path;

use scene_data::SceneSample;
use serde::{Deserialize, Serialize};
use sgn_nets::surrogate::{fit, pixel_accuracy, FitConfig};
use sgn_nets::{Checkpoint, EmbedderSpec, RegressorSpec, SegNetSpec, Surrogate, SurrogateSpec};

use crate::error::{EvalError, Result};

pub const EMBEDDER_FILE: &str = "embedder.ckpt";
pub const REGRESSOR_FILE: &str = "regressor.ckpt";
pub const SEGMENTER_FILE: &str = "segmenter.ckpt";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub width: usize,
    pub fit: FitConfig,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { width: 8, fit: FitConfig { epochs: 16, batch_size: 8, lr: 2e-3, seed: 0, class_balanced: true } }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogates {
    pub embedder: Surrogate,
    pub regressor: Surrogate,
    pub segmenter: Surrogate,
}

impl Surrogates {
    /// Trains all three on `train`; the embedder's classes are the strongest attribute.
    pub fn train(train: &[&SceneSample], num_classes: usize, cfg: &SurrogateConfig) -> Result<Self> {
        let a = train.first().map(|s| s.attributes.len()).ok_or_else(|| EvalError::Contract("no training samples".into()))?;
        let mut embedder = Surrogate::new(SurrogateSpec::Embedder(EmbedderSpec { width: cfg.width, num_conditions: a }), cfg.fit.seed)?;
        let mut regressor = Surrogate::new(SurrogateSpec::Regressor(RegressorSpec { width: cfg.width, num_attributes: a }), cfg.fit.seed + 1)?;
        let mut segmenter = Surrogate::new(SurrogateSpec::Segmenter(SegNetSpec::new(num_classes)), cfg.fit.seed + 2)?;
        for (name, net) in [("embedder", &mut embedder), ("regressor", &mut regressor), ("segmenter", &mut segmenter)] {
            let history = fit(net, train, &cfg.fit)?;
            log::info!("{name}: final training loss {:?}", history.last());
        }
        Ok(Self { embedder, regressor, segmenter })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.embedder.to_checkpoint()?.save(dir.join(EMBEDDER_FILE))?;
        self.regressor.to_checkpoint()?.save(dir.join(REGRESSOR_FILE))?;
        self.segmenter.to_checkpoint()?.save(dir.join(SEGMENTER_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let one = |name: &'static str, file: &str| -> Result<Surrogate> {
            let path = dir.join(file);
            if !path.exists() {
                return Err(EvalError::MissingSurrogate { name, path: path.display().to_string() });
            }
            Ok(Surrogate::from_checkpoint(&Checkpoint::load(&path)?)?)
        };
        Ok(Self {
            embedder: one("embedder", EMBEDDER_FILE)?,
            regressor: one("regressor", REGRESSOR_FILE)?,
            segmenter: one("segmenter", SEGMENTER_FILE)?,
        })
    }

    /// Segmenter pixel accuracy on real samples, in percent.
    pub fn segmenter_accuracy(&self, samples: &[&SceneSample]) -> Result<f64> {
        Ok(100.0 * pixel_accuracy(&self.segmenter, samples)?)
    }
}
