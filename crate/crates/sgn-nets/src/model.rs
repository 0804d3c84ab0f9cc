//! A generator with its discriminators, bundled for training and inference.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scene_data::{AttributeVector, SceneImage, SemanticLayout};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{NetError, Result};
use crate::graph::Graph;
use crate::nets::{
    attribute_batch, forward_generator, layout_batch, noise_batch, unbatch_images, DiscriminatorSpec, GeneratorInputs,
    GeneratorSpec, NoiseMap,
};
use crate::params::ParamStore;

/// Discriminator parameter prefix used while the coarse generator trains alone.
pub const D_COARSE: &str = "d_coarse";
/// Discriminator parameter prefix once the fine generator is active.
pub const D_FINE: &str = "d_fine";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub attribute_names: Vec<String>,
    pub num_classes: u32,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.attribute_names.len() != self.generator.num_attributes
            || self.discriminator.num_attributes != self.generator.num_attributes
        {
            return Err(NetError::Config("attribute counts disagree across spec".into()));
        }
        if self.num_classes as usize > 1usize << self.generator.layout_bits {
            return Err(NetError::Config(format!(
                "{} classes do not fit in {} bits",
                self.num_classes, self.generator.layout_bits
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnModel {
    pub spec: ModelSpec,
    pub params: ParamStore,
}

impl SgnModel {
    /// Fresh Gaussian-initialized generator and both discriminator sets.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        spec.generator.init(&mut params, &mut rng);
        spec.discriminator.init(&mut params, &mut rng, D_COARSE);
        spec.discriminator.init(&mut params, &mut rng, D_FINE);
        Ok(Self { spec, params })
    }

    pub fn fine_resolution(&self) -> usize {
        self.spec.generator.fine_resolution
    }

    /// Deterministic noise for a seed.
    pub fn noise_for_seed(&self, seed: u64) -> NoiseMap {
        let g = &self.spec.generator;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NoiseMap::sample(g.noise_channels, g.fine_resolution, g.fine_resolution, &mut rng)
    }

    /// Coarse and fine images for a batch; layouts must be at fine resolution.
    pub fn generate(
        &self,
        layouts: &[&SemanticLayout],
        attributes: &[&AttributeVector],
        noise: &[NoiseMap],
    ) -> Result<(Vec<SceneImage>, Vec<SceneImage>)> {
        if layouts.len() != attributes.len() || layouts.len() != noise.len() {
            return Err(NetError::Shape("batch members disagree in count".into()));
        }
        let gs = &self.spec.generator;
        let mut g = Graph::new();
        let noise = g.constant(noise_batch(noise)?);
        let layout = g.constant(layout_batch(layouts, gs.layout_bits)?);
        let attributes = g.constant(attribute_batch(attributes)?);
        let out = forward_generator(&mut g, &self.params, gs, GeneratorInputs { noise, layout, attributes }, true)?;
        let fine = out.fine.expect("fine requested");
        Ok((unbatch_images(g.value(out.coarse)), unbatch_images(g.value(fine))))
    }

    /// Fine-scale image for one layout/attribute pair, noise drawn from `seed`.
    pub fn hallucinate(&self, layout: &SemanticLayout, attributes: &AttributeVector, seed: u64) -> Result<SceneImage> {
        let (_, mut fine) = self.generate(&[layout], &[attributes], &[self.noise_for_seed(seed)])?;
        Ok(fine.remove(0))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(&self.spec, self.params.clone())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let spec: ModelSpec = ck.spec()?;
        spec.validate()?;
        let reference = Self::new(spec.clone(), 0)?;
        for name in reference.params.names() {
            let want = reference.params.get(name).expect("listed").shape();
            match ck.params.get(name) {
                None => return Err(NetError::MissingParam(name.to_string())),
                Some(t) if t.shape() != want => {
                    return Err(NetError::Shape(format!("parameter `{name}` has shape {:?}, spec wants {want:?}", t.shape())))
                }
                Some(_) => {}
            }
        }
        Ok(Self { spec, params: ck.params.clone() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use scene_data::DESK_ATTRIBUTES;

    pub(crate) fn tiny_spec() -> ModelSpec {
        ModelSpec {
            generator: GeneratorSpec {
                base_resolution: 16,
                fine_resolution: 32,
                scale_divisor: 16,
                coarse_blocks: 1,
                fine_blocks: 1,
                ..GeneratorSpec::desk(DESK_ATTRIBUTES.len())
            },
            discriminator: DiscriminatorSpec { scale_divisor: 16, ..DiscriminatorSpec::desk(DESK_ATTRIBUTES.len()) },
            attribute_names: DESK_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
            num_classes: 6,
        }
    }

    #[test]
    fn hallucinate_is_deterministic() {
        let m = SgnModel::new(tiny_spec(), 1).unwrap();
        let layout = SemanticLayout::filled(32, 32, 2, 6).unwrap();
        let a = AttributeVector::zeros(scene_data::desk_attribute_names());
        let x = m.hallucinate(&layout, &a, 7).unwrap();
        assert_eq!(x.dim(), (32, 32, 3));
        assert_eq!(x, m.hallucinate(&layout, &a, 7).unwrap());
        assert_ne!(x, m.hallucinate(&layout, &a, 8).unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = SgnModel::new(tiny_spec(), 4).unwrap();
        let p = dir.path().join("a.ckpt");
        m.save(&p).unwrap();
        let back = SgnModel::load(&p).unwrap();
        assert_eq!(back, m);
        let q = dir.path().join("b.ckpt");
        back.save(&q).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }
}
