use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Param, ParamSet};
use crate::data::{load_tensor, save_tensor, Tensor, TensorData};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

/// Describes a checkpoint directory: one tensor file per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub method: String,
    pub seed: u64,
    pub epoch: usize,
    pub model: ModelConfig,
    pub params: Vec<ParamEntry>,
}

/// Writes `params` into `dir` as f32 tensors plus a JSON manifest.
pub fn save_checkpoint(
    dir: &Path,
    params: &ParamSet,
    model: &ModelConfig,
    method: &str,
    seed: u64,
    epoch: usize,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for p in params.iter() {
        let file = format!("{}.mrt", p.name);
        let values = p.values.iter().map(|&v| v as f32).collect();
        save_tensor(dir.join(&file), &Tensor::f32(p.shape.clone(), values)?)?;
        entries.push(ParamEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            file,
        });
    }
    let manifest = CheckpointManifest {
        method: method.to_string(),
        seed,
        epoch,
        model: model.clone(),
        params: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointManifest, ParamSet)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format("manifest", format!("{}: {e}", path.display())))?;
    let mut params = Vec::with_capacity(manifest.params.len());
    for entry in &manifest.params {
        let tensor = load_tensor(dir.join(&entry.file))?;
        let TensorData::F32(values) = tensor.data else {
            return Err(Error::format("dtype", format!("{} must be f32", entry.file)));
        };
        if tensor.shape != entry.shape {
            return Err(Error::format(
                "shape",
                format!(
                    "{} has shape {:?}, manifest says {:?}",
                    entry.file, tensor.shape, entry.shape
                ),
            ));
        }
        params.push(Param {
            name: entry.name.clone(),
            shape: entry.shape.clone(),
            values: values.into_iter().map(f64::from).collect(),
        });
    }
    let params = ParamSet::new(params)?;
    Model::new(manifest.model.clone())?.check_params(&params)?;
    Ok((manifest, params))
}
