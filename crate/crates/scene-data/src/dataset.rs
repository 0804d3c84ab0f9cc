//! On-disk dataset layout, manifests and the synthetic corpus builder.
//!
//! ```text
//! <root>/manifest.json
//! <root>/images/<id>.png       8-bit RGB
//! <root>/layouts/<id>.png      8-bit single-channel labels
//! <root>/attributes/<id>.json  {"values": [...]}
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{GrayImage, ImageReader};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{als18k_attribute_names, AttributeVector, ALS18K_NUM_CLASSES};
use crate::error::{DataError, Result};
use crate::grammar::sample_layout;
use crate::layout::SemanticLayout;
use crate::oracle::{render_oracle, OracleRecipe};
use crate::scene::{from_rgb8, to_rgb8, SceneSample, SharedSample};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub num_classes: u32,
    pub attribute_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub counts: SplitCounts,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AttributeFile {
    values: Vec<f64>,
}

/// Handle on one sample, either resident or stored under a dataset root.
#[derive(Debug, Clone)]
pub enum SampleRef {
    Memory(SharedSample),
    Disk { root: PathBuf, id: String },
}

impl SampleRef {
    pub fn id(&self) -> &str {
        match self {
            SampleRef::Memory(s) => &s.id,
            SampleRef::Disk { id, .. } => id,
        }
    }

    pub fn load(&self, manifest: &Manifest) -> Result<SharedSample> {
        match self {
            SampleRef::Memory(s) => Ok(Arc::clone(s)),
            SampleRef::Disk { root, id } => read_sample(root, id, manifest).map(Arc::new),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub manifest: Manifest,
    pub train: Vec<SampleRef>,
    pub test: Vec<SampleRef>,
}

impl DatasetSplit {
    pub fn load_train(&self) -> Result<Vec<SharedSample>> {
        self.train.iter().map(|s| s.load(&self.manifest)).collect()
    }

    pub fn load_test(&self) -> Result<Vec<SharedSample>> {
        self.test.iter().map(|s| s.load(&self.manifest)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub resolution: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

fn sample_seed(seed: u64, split: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ split.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ index.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7)
}

/// Generates one synthetic sample from its own derived seed.
pub fn synth_sample(recipe: &OracleRecipe, id: String, resolution: usize, seed: u64) -> Result<SceneSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = sample_layout(&mut rng, resolution, resolution);
    let attributes = AttributeVector::uniform(recipe.attribute_names.clone(), &mut rng);
    let image = render_oracle(&layout, &attributes, recipe, seed)?;
    SceneSample::new(id, image, layout, attributes)
}

/// Builds a disjoint train/test corpus rendered by the oracle.
pub fn build_synthetic_corpus(recipe: &OracleRecipe, cfg: &CorpusConfig) -> Result<DatasetSplit> {
    if cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(DataError::InvalidArgument("n_train and n_test must be positive".into()));
    }
    if cfg.resolution < 4 {
        return Err(DataError::InvalidArgument("resolution must be at least 4".into()));
    }
    let make = |split: u64, prefix: &str, n: usize| -> Result<Vec<SampleRef>> {
        (0..n)
            .map(|i| {
                let id = format!("{prefix}_{i:05}");
                let s = synth_sample(recipe, id, cfg.resolution, sample_seed(cfg.seed, split, i as u64))?;
                Ok(SampleRef::Memory(Arc::new(s)))
            })
            .collect()
    };
    let train = make(0, "train", cfg.n_train)?;
    let test = make(1, "test", cfg.n_test)?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        num_classes: recipe.num_classes(),
        attribute_names: recipe.attribute_names.clone(),
        resolution: Some(cfg.resolution),
        seed: Some(cfg.seed),
        counts: SplitCounts { train: train.len(), test: test.len() },
        train: train.iter().map(|s| s.id().to_string()).collect(),
        test: test.iter().map(|s| s.id().to_string()).collect(),
    };
    Ok(DatasetSplit { manifest, train, test })
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| DataError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| DataError::Json { path: path.into(), source: e })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::Json { path: path.into(), source: e })
}

pub fn write_label_png(path: &Path, layout: &SemanticLayout) -> Result<()> {
    let (h, w) = layout.dim();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([layout.get(y as usize, x as usize)]));
    img.save(path).map_err(|e| DataError::Image { path: path.into(), source: e })
}

pub fn read_label_png(path: &Path, num_classes: u32) -> Result<SemanticLayout> {
    let img = ImageReader::open(path)
        .map_err(|e| DataError::io(path, e))?
        .decode()
        .map_err(|e| DataError::Image { path: path.into(), source: e })?;
    if img.color().channel_count() != 1 {
        return Err(DataError::Shape(format!("{}: label map must be single-channel", path.display())));
    }
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let labels = Array2::from_shape_fn((h as usize, w as usize), |(y, x)| gray.get_pixel(x as u32, y as u32)[0]);
    SemanticLayout::new(labels, num_classes)
}

pub fn read_rgb_png(path: &Path) -> Result<image::RgbImage> {
    Ok(ImageReader::open(path)
        .map_err(|e| DataError::io(path, e))?
        .decode()
        .map_err(|e| DataError::Image { path: path.into(), source: e })?
        .to_rgb8())
}

pub fn write_sample(root: &Path, sample: &SceneSample) -> Result<()> {
    let img_path = root.join("images").join(format!("{}.png", sample.id));
    to_rgb8(&sample.image)
        .save(&img_path)
        .map_err(|e| DataError::Image { path: img_path.clone(), source: e })?;
    write_label_png(&root.join("layouts").join(format!("{}.png", sample.id)), &sample.layout)?;
    write_json(
        &root.join("attributes").join(format!("{}.json", sample.id)),
        &AttributeFile { values: sample.attributes.values().to_vec() },
    )
}

/// Writes all samples and the manifest under `root`.
pub fn write_dataset(root: &Path, split: &DatasetSplit) -> Result<()> {
    for sub in ["images", "layouts", "attributes"] {
        ensure_dir(&root.join(sub))?;
    }
    for s in split.train.iter().chain(&split.test) {
        write_sample(root, s.load(&split.manifest)?.as_ref())?;
    }
    write_json(&root.join("manifest.json"), &split.manifest)
}

fn read_sample(root: &Path, id: &str, manifest: &Manifest) -> Result<SceneSample> {
    let rgb = read_rgb_png(&root.join("images").join(format!("{id}.png")))?;
    let layout = read_label_png(&root.join("layouts").join(format!("{id}.png")), manifest.num_classes)?;
    let attr_path = root.join("attributes").join(format!("{id}.json"));
    let file: AttributeFile = read_json(&attr_path)?;
    let attributes = AttributeVector::new(file.values, manifest.attribute_names.clone())?;
    SceneSample::new(id, from_rgb8(&rgb), layout, attributes)
}

/// Loads a dataset written by [`write_dataset`]; every sample must be valid.
pub fn load_dataset(root: &Path) -> Result<DatasetSplit> {
    let manifest: Manifest = read_json(&root.join("manifest.json"))?;
    let refs = |ids: &[String]| -> Vec<SampleRef> {
        ids.iter()
            .map(|id| SampleRef::Disk { root: root.to_path_buf(), id: id.clone() })
            .collect()
    };
    let split = DatasetSplit { train: refs(&manifest.train), test: refs(&manifest.test), manifest };
    if split.train.is_empty() {
        return Err(DataError::EmptySplit("train".into()));
    }
    Ok(split)
}

/// Lists sample ids of a directory tree without a manifest (file stems of `images/`).
fn scan_ids(dir: &Path) -> Result<Vec<String>> {
    let images = dir.join("images");
    let mut ids: Vec<String> = fs::read_dir(&images)
        .map_err(|e| DataError::io(&images, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            (p.extension().and_then(|s| s.to_str()) == Some("png"))
                .then(|| p.file_stem().and_then(|s| s.to_str()).map(str::to_string))
                .flatten()
        })
        .collect();
    ids.sort();
    Ok(ids)
}

/// Checks one ALS18K sample without keeping its pixels.
fn validate_als18k_sample(root: &Path, id: &str, manifest: &Manifest) -> Result<()> {
    let img_path = root.join("images").join(format!("{id}.png"));
    let (w, h) = image::image_dimensions(&img_path).map_err(|e| DataError::Image { path: img_path.clone(), source: e })?;
    let layout = read_label_png(&root.join("layouts").join(format!("{id}.png")), manifest.num_classes)?;
    if layout.dim() != (h as usize, w as usize) {
        return Err(DataError::Shape(format!("{id}: image {h}x{w} vs layout {:?}", layout.dim())));
    }
    let file: AttributeFile = read_json(&root.join("attributes").join(format!("{id}.json")))?;
    AttributeVector::new(file.values, manifest.attribute_names.clone())?;
    Ok(())
}

/// Loads an ALS18K-format tree: 150 classes, 40 attributes.
///
/// Split membership comes from `manifest.json` when present, otherwise from
/// `train/` and `test/` subdirectories with the usual `images/`, `layouts/`,
/// `attributes/` children. Malformed samples are skipped with a warning; an
/// empty split is an error.
pub fn load_als18k(root: &Path) -> Result<DatasetSplit> {
    let names = als18k_attribute_names();
    let base = |train: Vec<String>, test: Vec<String>| Manifest {
        version: MANIFEST_VERSION,
        num_classes: ALS18K_NUM_CLASSES,
        attribute_names: names.clone(),
        resolution: None,
        seed: None,
        counts: SplitCounts { train: train.len(), test: test.len() },
        train,
        test,
    };
    let (manifest, train_root, test_root) = if root.join("manifest.json").exists() {
        let m: Manifest = read_json(&root.join("manifest.json"))?;
        (base(m.train, m.test), root.to_path_buf(), root.to_path_buf())
    } else {
        let (tr, te) = (root.join("train"), root.join("test"));
        (base(scan_ids(&tr)?, scan_ids(&te)?), tr, te)
    };

    let keep = |dir: &Path, ids: &[String]| -> Vec<SampleRef> {
        ids.iter()
            .filter(|id| match validate_als18k_sample(dir, id, &manifest) {
                Ok(()) => true,
                Err(e) => {
                    log::warn!("skipping sample {id}: {e}");
                    false
                }
            })
            .map(|id| SampleRef::Disk { root: dir.to_path_buf(), id: id.clone() })
            .collect()
    };
    let train = keep(&train_root, &manifest.train);
    let test = keep(&test_root, &manifest.test);
    if train.is_empty() {
        return Err(DataError::EmptySplit("train".into()));
    }
    if test.is_empty() {
        return Err(DataError::EmptySplit("test".into()));
    }
    let manifest = Manifest {
        counts: SplitCounts { train: train.len(), test: test.len() },
        train: train.iter().map(|s| s.id().to_string()).collect(),
        test: test.iter().map(|s| s.id().to_string()).collect(),
        ..manifest
    };
    Ok(DatasetSplit { manifest, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small(n_train: usize, n_test: usize, seed: u64) -> DatasetSplit {
        let cfg = CorpusConfig { resolution: 16, n_train, n_test, seed };
        build_synthetic_corpus(&OracleRecipe::desk(0), &cfg).unwrap()
    }

    #[test]
    fn counts_and_disjointness() {
        let split = small(40, 10, 7);
        assert_eq!(split.train.len(), 40);
        assert_eq!(split.test.len(), 10);
        let ids: HashSet<_> = split.train.iter().chain(&split.test).map(|s| s.id().to_string()).collect();
        assert_eq!(ids.len(), 50);
        assert_eq!(split.manifest.counts, SplitCounts { train: 40, test: 10 });
    }

    #[test]
    fn rejects_empty_request() {
        let cfg = CorpusConfig { resolution: 16, n_train: 0, n_test: 1, seed: 0 };
        assert!(build_synthetic_corpus(&OracleRecipe::desk(0), &cfg).is_err());
    }

    #[test]
    fn manifest_is_byte_identical_for_same_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_dataset(a.path(), &small(6, 2, 3)).unwrap();
        write_dataset(b.path(), &small(6, 2, 3)).unwrap();
        let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
        assert_eq!(read(a.path(), "manifest.json"), read(b.path(), "manifest.json"));
        assert_eq!(read(a.path(), "images/train_00003.png"), read(b.path(), "images/train_00003.png"));
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let split = small(3, 2, 1);
        write_dataset(dir.path(), &split).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.manifest, split.manifest);
        let a = split.load_train().unwrap();
        let b = loaded.load_train().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.layout, y.layout);
            assert_eq!(x.attributes, y.attributes);
            let max_err = x.image.iter().zip(y.image.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(max_err <= 1.0 / 255.0 + 1e-12);
        }
    }
}
