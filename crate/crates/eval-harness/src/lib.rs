//! Quality, controllability and fidelity metrics for generated scenes.

pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod report;
pub mod surrogates;

pub use error::{EvalError, Result};
pub use evaluate::{
    ablation_variants, attribute_sweep, controllability, evaluate_checkpoint, evaluate_images, evaluate_model,
    evaluate_real, generate_for, run_ablation, AblationVariant, IS_SPLITS,
};
pub use metrics::{attribute_mse, frechet_distance, inception_score, segmentation_accuracy, spearman};
pub use report::{format_table, MetricReport, TABLE_HEADER};
pub use surrogates::{SurrogateConfig, Surrogates};
