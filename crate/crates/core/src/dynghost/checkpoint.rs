use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};
use crate::tensor::{load_tensor, save_tensor, write_atomic, TensorF};

use super::config::DynGhostConfig;
use super::optim::AdamWConfig;
use super::params::ParamStore;

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointEntry {
    pub name: String,
    pub file: String,
    pub dims: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub config: DynGhostConfig,
    pub step: usize,
    pub optimizer: AdamWConfig,
    pub params: Vec<CheckpointEntry>,
}

/// One GTF file per named parameter plus `manifest.json`. Values are stored
/// as 32-bit floats.
pub fn save_checkpoint(dir: impl AsRef<Path>, cfg: &DynGhostConfig, params: &ParamStore, step: usize, optimizer: &AdamWConfig) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| GhostError::io(dir, e))?;
    let mut entries = Vec::new();
    for slot in params.slots() {
        let file = format!("{}.gtf", slot.name);
        let t = TensorF::from_vec(&slot.dims, params.values()[slot.range.clone()].to_vec())?;
        save_tensor(&t, dir.join(&file))?;
        entries.push(CheckpointEntry {
            name: slot.name.clone(),
            file,
            dims: slot.dims.clone(),
        });
    }
    let manifest = CheckpointManifest {
        config: cfg.clone(),
        step,
        optimizer: *optimizer,
        params: entries,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(CHECKPOINT_MANIFEST), &json)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(CheckpointManifest, ParamStore)> {
    let dir = dir.as_ref();
    let path = dir.join(CHECKPOINT_MANIFEST);
    if !path.exists() {
        return Err(GhostError::NotFound(format!("no checkpoint at {}", dir.display())));
    }
    let bytes = std::fs::read(&path).map_err(|e| GhostError::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&bytes).map_err(|e| GhostError::format(&path, e.to_string()))?;
    let mut params = ParamStore::zeros(&manifest.config)?;
    if manifest.params.len() != params.slots().len() {
        return Err(GhostError::format(&path, format!("{} entries for {} parameters", manifest.params.len(), params.slots().len())));
    }
    for (entry, slot) in manifest.params.iter().zip(params.slots().to_vec()) {
        if entry.name != slot.name || entry.dims != slot.dims {
            return Err(GhostError::format(&path, format!("entry {} does not match parameter {}", entry.name, slot.name)));
        }
        let t = load_tensor(dir.join(&entry.file))?;
        if t.dims() != slot.dims.as_slice() {
            return Err(GhostError::format(dir.join(&entry.file), format!("dims {:?}, expected {:?}", t.dims(), slot.dims)));
        }
        params.values_mut()[slot.range.clone()].copy_from_slice(t.data());
    }
    params.check_finite()?;
    Ok((manifest, params))
}
