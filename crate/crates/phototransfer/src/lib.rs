//! Photorealistic region-matched colour transfer with smoothing and enhancement.

pub mod bilateral;
pub mod cg;
pub mod error;
pub mod pipeline;
pub mod poisson;
pub mod smooth;
pub mod wct;

pub use bilateral::cross_bilateral;
pub use error::{Result, TransferError};
pub use pipeline::{transfer_pipeline, FeatureSource, Stage, StageOutput, TimingRow, TransferConfig, TransferResult};
pub use poisson::{poisson_energy, poisson_residual, screened_poisson};
pub use smooth::{smooth_affinity, smoothing_residual, AffinityGraph};
pub use wct::{region_stats, stylize, wct_region, RegionStats};
