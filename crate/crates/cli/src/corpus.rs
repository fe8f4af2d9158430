//! On-disk corpus: stacked `[N, H, W]` tensors per task split plus a
//! manifest with content hashes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cmaml::artifacts::ArtifactSpec;
use cmaml::config::RunConfig;
use cmaml::data::{load_tensor, save_tensor, CleanSource, ImageTensor, PairedSample, Tensor, TensorData};
use cmaml::metrics::EvalCase;
use cmaml::tasks::{simulate_pairs, PoolLayout, Task};
use cmaml::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const TRAIN_DIR: &str = "train";
pub const UNSEEN_DIR: &str = "unseen";
pub const COMPOSITE_DIR: &str = "composite";
const EVAL_SPLIT: &str = "eval";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    /// Path relative to the corpus root.
    pub path: String,
    pub spec: String,
    pub split: String,
    pub kind: String,
    pub count: usize,
    pub seed: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub seed: u64,
    pub image_size: usize,
    pub entries: Vec<CorpusEntry>,
}

/// Fails unless `dir` is absent, empty, or `force` is set.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(Error::Argument(format!(
                "{} is not empty; pass --force to overwrite",
                dir.display()
            ))
            .into());
        }
        if occupied {
            fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn stack(images: &[&ImageTensor]) -> Result<Tensor> {
    let (h, w) = images.first().map(|i| i.shape()).unwrap_or((0, 0));
    let mut values = Vec::with_capacity(images.len() * h * w);
    for image in images {
        values.extend_from_slice(image.pixels());
    }
    Ok(Tensor::f32(vec![images.len(), h, w], values)?)
}

fn unstack(tensor: Tensor, path: &Path) -> Result<Vec<ImageTensor>> {
    let [n, h, w] = tensor.shape[..] else {
        return Err(Error::Data(format!("{} is not a [N, H, W] stack", path.display())).into());
    };
    let TensorData::F32(values) = tensor.data else {
        return Err(Error::Data(format!("{} must hold f32 values", path.display())).into());
    };
    (0..n)
        .map(|i| {
            Ok(ImageTensor::new(
                h,
                w,
                values[i * h * w..(i + 1) * h * w].to_vec(),
            )?)
        })
        .collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Writer<'a> {
    root: &'a Path,
    seed: u64,
    entries: Vec<CorpusEntry>,
}

impl Writer<'_> {
    fn write(&mut self, group: &str, spec: &ArtifactSpec, split: &str, pairs: &[PairedSample]) -> Result<()> {
        let dir = self.root.join(group).join(spec.id());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let clean: Vec<&ImageTensor> = pairs.iter().map(|p| &p.clean).collect();
        let degraded: Vec<&ImageTensor> = pairs.iter().map(|p| &p.degraded).collect();
        for (kind, images) in [("clean", clean), ("degraded", degraded)] {
            let rel = format!("{group}/{}/{split}_{kind}.mrt", spec.id());
            let path = self.root.join(&rel);
            save_tensor(&path, &stack(&images)?)?;
            self.entries.push(CorpusEntry {
                sha256: sha256_file(&path)?,
                path: rel,
                spec: spec.id(),
                split: split.to_string(),
                kind: kind.to_string(),
                count: images.len(),
                seed: self.seed,
            });
        }
        Ok(())
    }
}

/// Clean-sequence index range reserved for unseen and composite artifacts.
pub fn eval_range(config: &RunConfig) -> Result<(usize, usize)> {
    let layout = PoolLayout::new(config.data.train_per_task, config.data.val_per_task)?;
    Ok((layout.end(), layout.end() + config.data.eval_images))
}

/// Generates every training pool and evaluation set of `config` into `out`.
pub fn simulate(config: &RunConfig, out: &Path, force: bool) -> Result<CorpusManifest> {
    let source = CleanSource::new(&config.data, config.seed)?;
    let layout = PoolLayout::new(config.data.train_per_task, config.data.val_per_task)?;
    let train_specs = config.tasks.train_specs();
    let tasks = cmaml::tasks::build_tasks(&train_specs, &source, layout)?;
    let range = eval_range(config)?;
    let unseen = simulate_pairs(&config.eval.unseen, &source, range)?;
    let composite = simulate_pairs(&config.eval.composite, &source, range)?;

    prepare_out_dir(out, force)?;
    let mut writer = Writer {
        root: out,
        seed: config.seed,
        entries: Vec::new(),
    };
    for task in &tasks {
        writer.write(TRAIN_DIR, &task.spec, "support", &task.support_pool)?;
        writer.write(TRAIN_DIR, &task.spec, "query", &task.query_pool)?;
        writer.write(TRAIN_DIR, &task.spec, "val", &task.val_pool)?;
    }
    for (spec, pairs) in config.eval.unseen.iter().zip(&unseen) {
        writer.write(UNSEEN_DIR, spec, EVAL_SPLIT, pairs)?;
    }
    for (spec, pairs) in config.eval.composite.iter().zip(&composite) {
        writer.write(COMPOSITE_DIR, spec, EVAL_SPLIT, pairs)?;
    }
    let manifest = CorpusManifest {
        seed: config.seed,
        image_size: config.data.crop_size,
        entries: writer.entries,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    let path = out.join(MANIFEST);
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<CorpusManifest> {
    let path = root.join(MANIFEST);
    if !path.is_file() {
        return Err(Error::Data(format!(
            "no corpus at {}; run `cmaml simulate --config <file> --out {}` first",
            root.display(),
            root.display()
        ))
        .into());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("malformed corpus manifest {}: {e}", path.display())).into())
}

fn read_images(root: &Path, rel: &str) -> Result<Vec<ImageTensor>> {
    let path: PathBuf = root.join(rel);
    if !path.is_file() {
        return Err(Error::Data(format!(
            "corpus file {} is missing; rerun `cmaml simulate`",
            path.display()
        ))
        .into());
    }
    unstack(load_tensor(&path)?, &path)
}

fn read_pairs(root: &Path, group: &str, spec: &ArtifactSpec, split: &str) -> Result<Vec<PairedSample>> {
    let base = format!("{group}/{}/{split}", spec.id());
    let clean = read_images(root, &format!("{base}_clean.mrt"))?;
    let degraded = read_images(root, &format!("{base}_degraded.mrt"))?;
    if clean.len() != degraded.len() {
        return Err(Error::Data(format!("{base}: clean and degraded stacks differ in length")).into());
    }
    degraded
        .into_iter()
        .zip(clean)
        .map(|(d, c)| Ok(PairedSample::new(d, c)?))
        .collect()
}

/// Training tasks of `config`, read back from the corpus.
pub fn load_train_tasks(root: &Path, config: &RunConfig) -> Result<Vec<Task>> {
    read_manifest(root)?;
    config
        .tasks
        .train_specs()
        .into_iter()
        .map(|spec| {
            let support = read_pairs(root, TRAIN_DIR, &spec, "support")?;
            let query = read_pairs(root, TRAIN_DIR, &spec, "query")?;
            let val = read_pairs(root, TRAIN_DIR, &spec, "val")?;
            Ok(Task::new(spec, support, query, val)?)
        })
        .collect()
}

/// Evaluation pairs of `specs` stored under `group`.
pub fn load_eval_cases(root: &Path, group: &str, specs: &[ArtifactSpec]) -> Result<Vec<EvalCase>> {
    read_manifest(root)?;
    specs
        .iter()
        .map(|spec| {
            Ok(EvalCase {
                artifact: spec.id(),
                pairs: read_pairs(root, group, spec, EVAL_SPLIT)?,
            })
        })
        .collect()
}
