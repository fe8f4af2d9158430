use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{meta_step, AdamState, Episode, MetaOrder};
use crate::curriculum::{default_schedule, PacingSchedule};
use crate::data::{derive_seed, PairedSample};
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim};
use crate::model::{Model, ParamSet};
use crate::tasks::Task;

const EPISODE_STREAM: u64 = 0x6570_6973;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Joint,
    Maml,
    Cmaml,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Joint, Method::Maml, Method::Cmaml];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Joint => "joint",
            Method::Maml => "maml",
            Method::Cmaml => "cmaml",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown method {s:?} (expected joint, maml or cmaml)")))
    }
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub method: Method,
    /// Inner-loop step size.
    pub alpha: f64,
    /// Outer Adam learning rate.
    pub beta: f64,
    pub max_epochs: usize,
    pub n_spt: usize,
    pub n_qry: usize,
    /// Tasks per meta-iteration.
    pub task_batch: usize,
    pub meta_order: MetaOrder,
    /// Adaptation steps for plain MAML.
    pub maml_steps: usize,
    /// Multiplies the number of iterations in each epoch.
    pub epoch_repeats: usize,
    /// Validation pairs per task scored after each epoch; 0 uses all.
    pub val_images: usize,
    /// Epoch interval between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Set from the run seed rather than read from the train section.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            method: Method::Cmaml,
            alpha: 1e-3,
            beta: 1e-3,
            max_epochs: 20,
            n_spt: 5,
            n_qry: 5,
            task_batch: 3,
            meta_order: MetaOrder::Second,
            maml_steps: 1,
            epoch_repeats: 1,
            val_images: 0,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("alpha", self.alpha), ("beta", self.beta)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("train.{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("max_epochs", self.max_epochs),
            ("n_spt", self.n_spt),
            ("n_qry", self.n_qry),
            ("task_batch", self.task_batch),
            ("maml_steps", self.maml_steps),
            ("epoch_repeats", self.epoch_repeats),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("train.{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Samples the optimizer sees per iteration with `steps` inner steps.
    pub fn samples_per_iteration(&self, steps: usize) -> usize {
        self.task_batch * (steps * self.n_spt + self.n_qry)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub method: Method,
    pub visible_tasks: Vec<String>,
    #[serde(rename = "U")]
    pub steps: usize,
    /// Mean post-adaptation query loss of each task sampled this epoch.
    pub per_task_query_loss: BTreeMap<String, f64>,
    /// Mean optimized loss per iteration.
    pub train_loss: f64,
    pub iterations: usize,
    pub samples_seen: usize,
    pub val_psnr: f64,
    pub val_ssim: f64,
    pub wall_time_s: f64,
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in history {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Data(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            field: "log",
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(records)
}

/// Called after every epoch with the record and the current parameters.
pub trait EpochObserver {
    fn on_epoch(&mut self, record: &EpochRecord, params: &ParamSet) -> Result<()>;
}

impl<F> EpochObserver for F
where
    F: FnMut(&EpochRecord, &ParamSet) -> Result<()>,
{
    fn on_epoch(&mut self, record: &EpochRecord, params: &ParamSet) -> Result<()> {
        self(record, params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub history: Vec<EpochRecord>,
}

/// Mean PSNR and SSIM of unadapted predictions over each task's
/// validation pool, truncated to `limit` pairs per task when non-zero.
pub fn validation_metrics(
    model: &Model,
    params: &ParamSet,
    tasks: &[Task],
    limit: usize,
) -> Result<(f64, f64)> {
    let pairs: Vec<&PairedSample> = tasks
        .iter()
        .flat_map(|t| {
            let n = if limit == 0 {
                t.val_pool.len()
            } else {
                limit.min(t.val_pool.len())
            };
            &t.val_pool[..n]
        })
        .collect();
    if pairs.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let scores: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|p| {
            let pred = model.predict(params, &p.degraded)?;
            Ok((psnr(&pred, &p.clean, 1.0)?, ssim(&pred, &p.clean, 1.0)?))
        })
        .collect::<Result<_>>()?;
    let n = scores.len() as f64;
    let (ps, ss) = scores.iter().fold((0.0, 0.0), |(a, b), (p, s)| (a + p, b + s));
    Ok((ps / n, ss / n))
}

fn check_finite(epoch: usize, loss: f64, params: &ParamSet) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "training loss became {loss} in epoch {epoch}"
        )));
    }
    if !params.is_finite() {
        return Err(Error::Numeric(format!(
            "parameters became non-finite in epoch {epoch}"
        )));
    }
    Ok(())
}

fn check_tasks(tasks: &[Task]) -> Result<HashMap<&str, &Task>> {
    if tasks.is_empty() {
        return Err(Error::Config("training needs at least one task".into()));
    }
    let mut by_id = HashMap::new();
    for t in tasks {
        if by_id.insert(t.id.as_str(), t).is_some() {
            return Err(Error::Config(format!("duplicate task {}", t.id)));
        }
    }
    Ok(by_id)
}

/// Shared meta-training loop; plain MAML is a single-tier schedule.
fn meta_train(
    model: &Model,
    tasks: &[Task],
    schedule: &PacingSchedule,
    config: &TrainRunConfig,
    method: Method,
    observer: &mut dyn EpochObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    let by_id = check_tasks(tasks)?;
    schedule.check_covers(tasks)?;
    if schedule.max_epochs() != config.max_epochs {
        return Err(Error::Config(format!(
            "schedule covers {} epochs but train.max_epochs = {}",
            schedule.max_epochs(),
            config.max_epochs
        )));
    }
    let mut theta = model.init_params(config.seed);
    let mut adam = AdamState::new(&theta, config.beta);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, EPISODE_STREAM));
    let mut history = Vec::with_capacity(config.max_epochs);

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let (visible, steps) = schedule.available_tasks(epoch)?;
        if config.task_batch > visible.len() {
            return Err(Error::Config(format!(
                "task mini-batch of {} exceeds the {} tasks visible in epoch {epoch}",
                config.task_batch,
                visible.len()
            )));
        }
        let iterations = visible.len().div_ceil(config.task_batch) * config.epoch_repeats;
        let mut per_task: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut loss_sum = 0.0;
        for _ in 0..iterations {
            let mut picked: Vec<&Task> = sample(&mut rng, visible.len(), config.task_batch)
                .into_iter()
                .map(|i| by_id[visible[i].as_str()])
                .collect();
            picked.sort_by(|a, b| a.id.cmp(&b.id));
            let episodes: Vec<Episode> = picked
                .iter()
                .map(|t| Episode::sample(t, config.n_spt, config.n_qry, &mut rng))
                .collect::<Result<_>>()?;
            let (next, mg) = meta_step(
                model,
                &theta,
                &episodes,
                steps,
                config.alpha,
                &mut adam,
                config.meta_order,
            )?;
            let loss = mg.meta_loss();
            check_finite(epoch, loss, &next)?;
            theta = next;
            loss_sum += loss;
            for (id, l) in mg.query_losses {
                let e = per_task.entry(id).or_insert((0.0, 0));
                e.0 += l;
                e.1 += 1;
            }
        }
        let (val_psnr, val_ssim) = validation_metrics(model, &theta, tasks, config.val_images)?;
        let record = EpochRecord {
            epoch,
            method,
            visible_tasks: visible,
            steps,
            per_task_query_loss: per_task
                .into_iter()
                .map(|(id, (s, n))| (id, s / n as f64))
                .collect(),
            train_loss: loss_sum / iterations as f64,
            iterations,
            samples_seen: iterations * config.samples_per_iteration(steps),
            val_psnr,
            val_ssim,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        observer.on_epoch(&record, &theta)?;
        history.push(record);
    }
    Ok(TrainOutcome {
        params: theta,
        history,
    })
}

/// Single-level training on the pooled support and query data of every
/// task, with the same iteration count and per-iteration sample budget as
/// MAML.
pub fn train_joint_observed(
    model: &Model,
    tasks: &[Task],
    config: &TrainRunConfig,
    observer: &mut dyn EpochObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_tasks(tasks)?;
    let pool: Vec<&PairedSample> = tasks
        .iter()
        .flat_map(|t| t.support_pool.iter().chain(&t.query_pool))
        .collect();
    let batch_size = config.samples_per_iteration(config.maml_steps);
    if batch_size > pool.len() {
        return Err(Error::Config(format!(
            "joint batch of {batch_size} exceeds the {} pooled training pairs",
            pool.len()
        )));
    }
    let visible: Vec<String> = tasks.iter().map(|t| t.id.clone()).collect();
    let iterations = tasks.len().div_ceil(config.task_batch) * config.epoch_repeats;
    let mut theta = model.init_params(config.seed);
    let mut adam = AdamState::new(&theta, config.beta);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, EPISODE_STREAM));
    let mut history = Vec::with_capacity(config.max_epochs);

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        for _ in 0..iterations {
            let batch: Vec<PairedSample> = sample(&mut rng, pool.len(), batch_size)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect();
            let (loss, grad) = model.loss_and_grad(&theta, &batch)?;
            let next = adam.step(&theta, &grad)?;
            check_finite(epoch, loss, &next)?;
            theta = next;
            loss_sum += loss;
        }
        let (val_psnr, val_ssim) = validation_metrics(model, &theta, tasks, config.val_images)?;
        let record = EpochRecord {
            epoch,
            method: Method::Joint,
            visible_tasks: visible.clone(),
            steps: config.maml_steps,
            per_task_query_loss: BTreeMap::new(),
            train_loss: loss_sum / iterations as f64,
            iterations,
            samples_seen: iterations * batch_size,
            val_psnr,
            val_ssim,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        observer.on_epoch(&record, &theta)?;
        history.push(record);
    }
    Ok(TrainOutcome {
        params: theta,
        history,
    })
}

fn ignore(_: &EpochRecord, _: &ParamSet) -> Result<()> {
    Ok(())
}

pub fn train_joint(model: &Model, tasks: &[Task], config: &TrainRunConfig) -> Result<TrainOutcome> {
    train_joint_observed(model, tasks, config, &mut ignore)
}

/// MAML: every task visible from the start with a fixed step count.
pub fn train_maml(model: &Model, tasks: &[Task], config: &TrainRunConfig) -> Result<TrainOutcome> {
    let ids = tasks.iter().map(|t| t.id.clone()).collect();
    let schedule = PacingSchedule::single_tier(ids, config.maml_steps, config.max_epochs)?;
    meta_train(model, tasks, &schedule, config, Method::Maml, &mut ignore)
}

pub fn train_cmaml(
    model: &Model,
    tasks: &[Task],
    schedule: &PacingSchedule,
    config: &TrainRunConfig,
) -> Result<TrainOutcome> {
    meta_train(model, tasks, schedule, config, Method::Cmaml, &mut ignore)
}

/// Runs `config.method`. CMAML uses `schedule`, or the default schedule
/// when none is given; the other methods ignore it.
pub fn train(
    model: &Model,
    tasks: &[Task],
    schedule: Option<&PacingSchedule>,
    config: &TrainRunConfig,
    observer: &mut dyn EpochObserver,
) -> Result<TrainOutcome> {
    match config.method {
        Method::Joint => train_joint_observed(model, tasks, config, observer),
        Method::Maml => {
            let ids = tasks.iter().map(|t| t.id.clone()).collect();
            let schedule = PacingSchedule::single_tier(ids, config.maml_steps, config.max_epochs)?;
            meta_train(model, tasks, &schedule, config, Method::Maml, observer)
        }
        Method::Cmaml => {
            let owned;
            let schedule = match schedule {
                Some(s) => s,
                None => {
                    owned = default_schedule(tasks, config.max_epochs)?;
                    &owned
                }
            };
            meta_train(model, tasks, schedule, config, Method::Cmaml, observer)
        }
    }
}
