//! Adversarial training of the scene generation network.

pub mod config;
pub mod error;
pub mod losses;
pub mod perceptual;
pub mod rnm;
pub mod train;

pub use config::{NetConfig, PerceptualConfig, PhaseEpochs, TrainConfig};
pub use error::{Result, TrainError};
pub use losses::{discriminator_loss, feature_distance, generator_loss, SCORE_EPS};
pub use perceptual::{perceptual_loss, train_perceptual_encoder, PerceptualEncoder};
pub use rnm::{layout_distance, rnm_nearest, RnmIndex};
pub use train::{
    phase_for_epoch, sample_negative_attributes, train_schedule, LossReport, Phase, PhaseBoundary, ScheduleOutcome,
    TrainBatch, Trainer,
};
