//! Layout-aware perceptual features from a frozen segmentation encoder.

use scene_data::SceneSample;
use sgn_nets::surrogate::{fit, pixel_accuracy};
use sgn_nets::{image_batch, Graph, Surrogate, SurrogateSpec, Tensor, Var};

use crate::config::PerceptualConfig;
use crate::error::{Result, TrainError};

pub const ENCODER_PREFIX: &str = "seg.";

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualEncoder {
    pub net: Surrogate,
    pub held_out_accuracy: f64,
}

impl PerceptualEncoder {
    /// Wraps an already trained segmenter.
    pub fn from_segmenter(net: Surrogate, held_out_accuracy: f64) -> Result<Self> {
        match net.spec {
            SurrogateSpec::Segmenter(_) => Ok(Self { net, held_out_accuracy }),
            _ => Err(TrainError::Config(format!("perceptual encoder needs a segmenter, got a {}", net.kind()))),
        }
    }

    /// Binds the encoder frozen into `g` and returns features of `x`.
    pub fn features(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.freeze(ENCODER_PREFIX);
        Ok(self.net.encoder_features(g, x)?)
    }

    /// Feature tensor of an `[N, 3, H, W]` batch.
    pub fn feature_tensor(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let f = self.features(&mut g, x)?;
        Ok(g.value(f).clone())
    }
}

/// Mean squared difference of encoder features of two equally shaped batches.
pub fn perceptual_loss(enc: &PerceptualEncoder, x: &Tensor, x_g: &Tensor) -> Result<f64> {
    if x.shape() != x_g.shape() {
        return Err(TrainError::Shape(format!("image batches {:?} and {:?} differ", x.shape(), x_g.shape())));
    }
    let (a, b) = (enc.feature_tensor(x)?, enc.feature_tensor(x_g)?);
    Ok((&a - &b).mapv(|v| v * v).mean().unwrap_or(0.0))
}

/// Trains the segmenter on `train`, measures pixel accuracy on `held_out`
/// and refuses to return an encoder below the configured floor.
pub fn train_perceptual_encoder(
    train: &[&SceneSample],
    held_out: &[&SceneSample],
    cfg: &PerceptualConfig,
) -> Result<PerceptualEncoder> {
    if train.is_empty() || held_out.is_empty() {
        return Err(TrainError::Config("perceptual encoder needs training and held-out samples".into()));
    }
    let mut net = Surrogate::new(SurrogateSpec::Segmenter(cfg.segmenter.clone()), cfg.fit.seed)?;
    let history = fit(&mut net, train, &cfg.fit)?;
    let accuracy = pixel_accuracy(&net, held_out)?;
    log::info!("perceptual encoder: loss {:?}, held-out pixel accuracy {accuracy:.4}", history.last());
    if accuracy < cfg.accuracy_floor {
        return Err(TrainError::QualityGate { accuracy, floor: cfg.accuracy_floor });
    }
    PerceptualEncoder::from_segmenter(net, accuracy)
}

/// Convenience: batch of sample images.
pub fn sample_images(samples: &[&SceneSample]) -> Result<Tensor> {
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    Ok(image_batch(&images)?)
}
