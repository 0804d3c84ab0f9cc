//! Loaded checkpoints, shared read-only across requests.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::Serialize;
use sgn_nets::{file_hash, Checkpoint, SgnModel};

use crate::error::{Result, StudioError};

/// Directory (or file) the service and CLI load their checkpoint from.
pub const CHECKPOINT_ENV: &str = "STUDIO_CHECKPOINT_DIR";
pub const DEFAULT_MODEL_FILE: &str = "model.ckpt";

#[derive(Debug)]
pub struct LoadedModel {
    pub model: SgnModel,
    pub hash: String,
    pub path: PathBuf,
    bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointInfo {
    pub hash: String,
    pub path: String,
    pub resolution: usize,
    pub num_classes: u32,
    pub attribute_names: Vec<String>,
}

impl LoadedModel {
    pub fn from_bytes(bytes: Vec<u8>, path: PathBuf) -> Result<Self> {
        let ck = Checkpoint::from_bytes(&bytes).map_err(|e| StudioError::Checkpoint(e.to_string()))?;
        let model = SgnModel::from_checkpoint(&ck).map_err(|e| StudioError::Checkpoint(e.to_string()))?;
        Ok(Self { model, hash: file_hash(&bytes), path, bytes })
    }

    /// A file, or a directory holding `model.ckpt` or else the last `*.ckpt` by name.
    pub fn load(path: &Path) -> Result<Self> {
        let file = resolve(path)?;
        let bytes = std::fs::read(&file).map_err(|e| StudioError::Checkpoint(format!("{}: {e}", file.display())))?;
        Self::from_bytes(bytes, file)
    }

    pub fn from_model(model: &SgnModel) -> Result<Self> {
        let bytes = model.to_checkpoint().map_err(|e| StudioError::Checkpoint(e.to_string()))?.to_bytes();
        Self::from_bytes(bytes, PathBuf::from("<memory>"))
    }

    /// Writes the checkpoint exactly as it was read.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.bytes)?;
        Ok(())
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.model.spec.attribute_names
    }

    pub fn num_classes(&self) -> u32 {
        self.model.spec.num_classes
    }

    pub fn resolution(&self) -> usize {
        self.model.fine_resolution()
    }

    pub fn info(&self) -> CheckpointInfo {
        CheckpointInfo {
            hash: self.hash.clone(),
            path: self.path.display().to_string(),
            resolution: self.resolution(),
            num_classes: self.num_classes(),
            attribute_names: self.attribute_names().to_vec(),
        }
    }
}

fn resolve(path: &Path) -> Result<PathBuf> {
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    let preferred = path.join(DEFAULT_MODEL_FILE);
    if preferred.is_file() {
        return Ok(preferred);
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ckpt"))
        .collect();
    found.sort();
    found.pop().ok_or_else(|| StudioError::Checkpoint(format!("no *.ckpt file in {}", path.display())))
}

/// The active checkpoint; replaced atomically, never mutated.
#[derive(Debug, Default)]
pub struct Registry {
    current: RwLock<Option<Arc<LoadedModel>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_model(model: LoadedModel) -> Self {
        Self { current: RwLock::new(Some(Arc::new(model))) }
    }

    /// On failure the previous checkpoint stays active.
    pub fn load(&self, path: &Path) -> Result<Arc<LoadedModel>> {
        let loaded = Arc::new(LoadedModel::load(path)?);
        *self.current.write() = Some(loaded.clone());
        Ok(loaded)
    }

    pub fn current(&self) -> Result<Arc<LoadedModel>> {
        self.current.read().clone().ok_or(StudioError::NoCheckpoint)
    }
}
