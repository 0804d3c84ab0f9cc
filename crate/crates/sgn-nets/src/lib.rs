//! Generator and discriminator networks with a small reverse-mode autodiff engine.

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod model;
pub mod nets;
pub mod params;
pub mod surrogate;

pub use checkpoint::{file_hash, Checkpoint};
pub use error::{NetError, Result};
pub use graph::{Gradients, Graph, Tensor, Var};
pub use kernels::ConvGeom;
pub use params::{Adam, AdamConfig, ParamStore};
pub use nets::{
    attribute_batch, build_pyramid, forward_discriminator, forward_generator, image_batch, layout_batch, layout_batch_at,
    noise_batch, replicate_attributes, unbatch_images, DiscriminatorSpec, GeneratorInputs, GeneratorOutputs, GeneratorSpec,
    ImagePyramid, NoiseMap,
};
pub use model::{ModelSpec, SgnModel, D_COARSE, D_FINE};
pub use surrogate::{EmbedderSpec, FitConfig, RegressorSpec, SegNetSpec, Surrogate, SurrogateSpec};
