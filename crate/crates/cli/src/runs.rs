//! Training runs: `<runs>/<method>-seed<seed>/` with the config echo, a JSONL
//! log and checkpoints.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cmaml::config::RunConfig;
use cmaml::model::{load_checkpoint, save_checkpoint, Model, ParamSet};
use cmaml::trainers::{train, EpochRecord, Method};
use cmaml::Error;

use crate::corpus::{load_train_tasks, prepare_out_dir};

pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_FILE: &str = "log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final";

pub fn run_name(method: Method, seed: u64) -> String {
    format!("{method}-seed{seed}")
}

fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}")
}

/// Trains `config.train.method` on the corpus at `corpus` and returns the
/// run directory.
pub fn train_run(
    config: &RunConfig,
    corpus: &Path,
    runs_root: &Path,
    force: bool,
    quiet: bool,
) -> Result<PathBuf> {
    let tasks = load_train_tasks(corpus, config)?;
    let model = Model::new(config.model.clone())?;
    let method = config.train.method;
    let schedule = match method {
        Method::Cmaml => Some(config.curriculum.schedule(&tasks, config.train.max_epochs)?),
        _ => None,
    };

    let dir = runs_root.join(run_name(method, config.seed));
    prepare_out_dir(&dir, force)?;
    config.save(&dir.join(CONFIG_FILE))?;
    let checkpoints = dir.join(CHECKPOINT_DIR);
    let log_path = dir.join(LOG_FILE);
    let mut log =
        BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);

    let every = config.train.checkpoint_every;
    let mut observer = |record: &EpochRecord, params: &ParamSet| -> cmaml::Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(log, "{line}")
            .and_then(|_| log.flush())
            .map_err(|e| Error::Io {
                path: log_path.clone(),
                source: e,
            })?;
        if every > 0 && record.epoch.is_multiple_of(every) {
            save_checkpoint(
                &checkpoints.join(checkpoint_name(record.epoch)),
                params,
                model.config(),
                method.as_str(),
                config.seed,
                record.epoch,
            )?;
        }
        if !quiet {
            eprintln!(
                "{method} epoch {:>4}/{}  U={}  loss {:.5}  val {:.2} dB / {:.4}",
                record.epoch,
                config.train.max_epochs,
                record.steps,
                record.train_loss,
                record.val_psnr,
                record.val_ssim
            );
        }
        Ok(())
    };
    let outcome = train(&model, &tasks, schedule.as_ref(), &config.train, &mut observer)?;
    save_checkpoint(
        &checkpoints.join(FINAL_CHECKPOINT),
        &outcome.params,
        model.config(),
        method.as_str(),
        config.seed,
        config.train.max_epochs,
    )?;
    Ok(dir)
}

/// A finished run loaded for evaluation.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub method: String,
    pub config: RunConfig,
    pub params: ParamSet,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let config = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let checkpoint = dir.join(CHECKPOINT_DIR).join(FINAL_CHECKPOINT);
    let (manifest, params) = load_checkpoint(&checkpoint)?;
    if manifest.model != config.model {
        return Err(Error::Config(format!(
            "{}: checkpoint model differs from the echoed config",
            dir.display()
        ))
        .into());
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        method: manifest.method,
        config,
        params,
    })
}
