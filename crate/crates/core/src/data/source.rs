use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{generate_phantom_cine, load_tensor, preprocess_cine, CineSequence};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Seeded synthetic cine phantoms.
    Phantom,
    /// Cine volumes (`[T, H, W]` f32 tensor files) read from `raw_dir`.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: SourceKind,
    pub raw_dir: Option<PathBuf>,
    /// Side length of generated phantoms before cropping.
    pub phantom_size: usize,
    pub num_frames: usize,
    pub crop_size: usize,
    /// Crop centre `[row, col]`; the image centre when absent.
    pub roi_center: Option<[usize; 2]>,
    /// Training images per task, split evenly into support and query pools.
    pub train_per_task: usize,
    pub val_per_task: usize,
    /// Held-out images used for unseen and composite evaluation.
    pub eval_images: usize,
    pub corpus_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: SourceKind::Phantom,
            raw_dir: None,
            phantom_size: 48,
            num_frames: 15,
            crop_size: 32,
            roi_center: None,
            train_per_task: 64,
            val_per_task: 16,
            eval_images: 16,
            corpus_dir: PathBuf::from("corpus"),
        }
    }
}

/// Supplies preprocessed clean cine sequences by index.
#[derive(Clone, Debug)]
pub struct CleanSource {
    config: DataConfig,
    seed: u64,
    raw: Option<Vec<CineSequence>>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent stream seed from a base seed and a label.
pub(crate) fn derive_seed(base: u64, label: u64) -> u64 {
    splitmix64(base ^ splitmix64(label))
}

impl CleanSource {
    pub fn new(config: &DataConfig, seed: u64) -> Result<Self> {
        let raw = match config.source {
            SourceKind::Phantom => None,
            SourceKind::Raw => {
                let dir = config
                    .raw_dir
                    .as_ref()
                    .ok_or_else(|| Error::Config("data.source = \"raw\" requires data.raw_dir".into()))?;
                Some(load_raw_dir(dir)?)
            }
        };
        Ok(Self {
            config: config.clone(),
            seed,
            raw,
        })
    }

    pub fn config(&self) -> &DataConfig {
        &self.config
    }

    /// Number of distinct sequences, or `None` when unbounded.
    pub fn available(&self) -> Option<usize> {
        self.raw.as_ref().map(Vec::len)
    }

    pub fn require(&self, count: usize) -> Result<()> {
        match self.available() {
            Some(n) if n < count => Err(Error::Data(format!(
                "need {count} clean sequences but only {n} are available"
            ))),
            _ => Ok(()),
        }
    }

    /// Preprocessed (cropped, per-frame normalized) sequence number `index`.
    pub fn cine(&self, index: usize) -> Result<CineSequence> {
        let center = self.config.roi_center.map(|[r, c]| (r, c));
        let raw = match &self.raw {
            Some(list) => list
                .get(index)
                .cloned()
                .ok_or_else(|| Error::Data(format!("no clean sequence with index {index}")))?,
            None => generate_phantom_cine(
                derive_seed(self.seed, index as u64),
                self.config.num_frames,
                self.config.phantom_size,
            )?,
        };
        preprocess_cine(&raw, center, self.config.crop_size)
    }
}

fn load_raw_dir(dir: &Path) -> Result<Vec<CineSequence>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mrt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("no .mrt volumes found in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| load_tensor(p).and_then(CineSequence::try_from))
        .collect()
}
