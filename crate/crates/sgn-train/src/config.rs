use scene_data::Manifest;
use serde::{Deserialize, Serialize};
use sgn_nets::{DiscriminatorSpec, FitConfig, GeneratorSpec, ModelSpec, SegNetSpec};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseEpochs {
    pub coarse: usize,
    pub fine: usize,
    pub joint: usize,
}

impl PhaseEpochs {
    pub const PAPER: PhaseEpochs = PhaseEpochs { coarse: 100, fine: 10, joint: 70 };

    pub fn total(&self) -> usize {
        self.coarse + self.fine + self.joint
    }
}

/// Network shape knobs; attribute names and class count come from the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub fine_resolution: usize,
    pub scale_divisor: usize,
    pub noise_channels: usize,
    pub coarse_blocks: usize,
    pub fine_blocks: usize,
    pub num_scales: usize,
    /// InstanceNorm inside the discriminators.
    #[serde(default)]
    pub discriminator_norm: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            fine_resolution: 64,
            scale_divisor: 4,
            noise_channels: 4,
            coarse_blocks: 5,
            fine_blocks: 2,
            num_scales: 3,
            discriminator_norm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptualConfig {
    pub segmenter: SegNetSpec,
    pub fit: FitConfig,
    pub accuracy_floor: f64,
    /// Fraction of the training set held out for the accuracy gate.
    pub held_out_fraction: f64,
}

impl PerceptualConfig {
    pub fn new(num_classes: usize) -> Self {
        Self {
            segmenter: SegNetSpec::new(num_classes),
            fit: FitConfig { epochs: 6, batch_size: 8, lr: 2e-3, seed: 0, class_balanced: false },
            accuracy_floor: 0.85,
            held_out_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub lambda: f64,
    pub epochs: PhaseEpochs,
    /// Divides each paper phase length (rounding up) when `epochs` is left at the paper values.
    pub epoch_divisor: usize,
    pub flip_probability: f64,
    pub seed: u64,
    pub use_rnm: bool,
    pub use_perceptual: bool,
    pub checkpoint_every: usize,
    pub net: NetConfig,
    /// Segmenter feature stage for the perceptual loss; `None` uses the deepest.
    pub feature_layer: Option<usize>,
    pub perceptual_fit: Option<FitConfig>,
    pub accuracy_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 40,
            learning_rate: 2e-4,
            beta1: 0.5,
            lambda: 10.0,
            epochs: PhaseEpochs::PAPER,
            epoch_divisor: 1,
            flip_probability: 0.5,
            seed: 0,
            use_rnm: true,
            use_perceptual: true,
            checkpoint_every: 1,
            net: NetConfig::default(),
            feature_layer: None,
            perceptual_fit: None,
            accuracy_floor: 0.85,
        }
    }
}

impl TrainConfig {
    /// Desk run: 64² images, phases 20/2/14.
    pub fn desk() -> Self {
        Self { batch_size: 8, epoch_divisor: 5, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(TrainError::Config(format!("λ must be non-negative, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(TrainError::Config("flip probability must lie in [0, 1]".into()));
        }
        if self.epoch_divisor == 0 || !(self.learning_rate > 0.0) {
            return Err(TrainError::Config("epoch divisor and learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Phase lengths after applying `epoch_divisor`.
    pub fn phase_epochs(&self) -> PhaseEpochs {
        let d = self.epoch_divisor.max(1);
        let f = |n: usize| n.div_ceil(d);
        PhaseEpochs { coarse: f(self.epochs.coarse), fine: f(self.epochs.fine), joint: f(self.epochs.joint) }
    }

    pub fn model_spec(&self, manifest: &Manifest) -> ModelSpec {
        let a = manifest.attribute_names.len();
        let n = &self.net;
        ModelSpec {
            generator: GeneratorSpec {
                base_resolution: n.fine_resolution / 2,
                fine_resolution: n.fine_resolution,
                noise_channels: n.noise_channels,
                scale_divisor: n.scale_divisor,
                coarse_blocks: n.coarse_blocks,
                fine_blocks: n.fine_blocks,
                ..GeneratorSpec::paper(a)
            },
            discriminator: DiscriminatorSpec {
                scale_divisor: n.scale_divisor,
                num_scales: n.num_scales,
                instance_norm: n.discriminator_norm,
                ..DiscriminatorSpec::paper(a)
            },
            attribute_names: manifest.attribute_names.clone(),
            num_classes: manifest.num_classes,
        }
    }

    pub fn perceptual_config(&self, num_classes: usize) -> PerceptualConfig {
        let mut p = PerceptualConfig::new(num_classes);
        if let Some(layer) = self.feature_layer {
            p.segmenter.feature_layer = layer;
        }
        if let Some(fit) = self.perceptual_fit {
            p.fit = fit;
        }
        p.fit.seed = self.seed;
        p.accuracy_floor = self.accuracy_floor;
        p
    }
}
