//! Artifact tasks: an operator spec, its complexity score and the
//! support/query/validation pools generated from clean sequences.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{apply_spec, ArtifactFamily, ArtifactSpec};
use crate::data::{CleanSource, PairedSample};
use crate::error::{Error, Result};

/// Amount levels of the three training families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub motion_s: Vec<usize>,
    pub us_acceleration: Vec<usize>,
    pub sr_scale: Vec<usize>,
    pub mask_seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            motion_s: vec![1, 2, 3],
            us_acceleration: vec![2, 4, 6],
            sr_scale: vec![2, 3, 5],
            mask_seed: 0,
        }
    }
}

impl TaskConfig {
    pub fn train_specs(&self) -> Vec<ArtifactSpec> {
        let motion = self.motion_s.iter().map(|&s| ArtifactSpec::motion(s));
        let us = self
            .us_acceleration
            .iter()
            .map(|&r| ArtifactSpec::undersampling(r, self.mask_seed));
        let sr = self.sr_scale.iter().map(|&k| ArtifactSpec::super_resolution(k));
        motion.chain(us).chain(sr).collect()
    }
}

/// Complexity of a task, tied to how ill-posed its operator is.
pub fn score_task(spec: &ArtifactSpec) -> Result<f64> {
    match *spec {
        ArtifactSpec::None => Ok(0.0),
        ArtifactSpec::Motion { s } => Ok(s as f64),
        ArtifactSpec::Undersampling { acceleration, .. } => Ok(acceleration as f64),
        ArtifactSpec::SuperResolution { scale } => Ok(scale as f64),
        ArtifactSpec::Composite { .. } => Err(Error::arg(format!(
            "{} is a composite artifact and has no training score",
            spec.id()
        ))),
        _ => Err(Error::arg(format!(
            "{} is an evaluation-only artifact and has no training score",
            spec.id()
        ))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: String,
    pub spec: ArtifactSpec,
    pub score: f64,
    pub support_pool: Vec<PairedSample>,
    pub query_pool: Vec<PairedSample>,
    /// Held-out pairs for validation and evaluation on seen artifacts.
    pub val_pool: Vec<PairedSample>,
}

impl Task {
    pub fn new(
        spec: ArtifactSpec,
        support_pool: Vec<PairedSample>,
        query_pool: Vec<PairedSample>,
        val_pool: Vec<PairedSample>,
    ) -> Result<Self> {
        spec.validate()?;
        let score = score_task(&spec)?;
        if support_pool.is_empty() || query_pool.is_empty() {
            return Err(Error::Data(format!(
                "task {} needs non-empty support and query pools",
                spec.id()
            )));
        }
        Ok(Self {
            id: spec.id(),
            spec,
            score,
            support_pool,
            query_pool,
            val_pool,
        })
    }

    pub fn family(&self) -> ArtifactFamily {
        self.spec.family()
    }
}

fn draw(pool: &[PairedSample], n: usize, rng: &mut impl Rng, what: &str) -> Result<Vec<PairedSample>> {
    if n > pool.len() {
        return Err(Error::arg(format!(
            "cannot draw {n} {what} samples from a pool of {}",
            pool.len()
        )));
    }
    Ok(sample(rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// `n` distinct support pairs drawn uniformly.
pub fn sample_support(task: &Task, n: usize, rng: &mut impl Rng) -> Result<Vec<PairedSample>> {
    draw(&task.support_pool, n, rng, "support")
}

/// `n` distinct query pairs drawn uniformly.
pub fn sample_query(task: &Task, n: usize, rng: &mut impl Rng) -> Result<Vec<PairedSample>> {
    draw(&task.query_pool, n, rng, "query")
}

/// Index ranges of the clean sequences behind each pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolLayout {
    pub support: (usize, usize),
    pub query: (usize, usize),
    pub val: (usize, usize),
}

impl PoolLayout {
    /// Training images are split evenly into support and query; validation
    /// images follow them.
    pub fn new(train_per_task: usize, val_per_task: usize) -> Result<Self> {
        if train_per_task < 2 {
            return Err(Error::Config(format!(
                "data.train_per_task must be >= 2, got {train_per_task}"
            )));
        }
        let half = train_per_task / 2;
        Ok(Self {
            support: (0, half),
            query: (half, train_per_task),
            val: (train_per_task, train_per_task + val_per_task),
        })
    }

    /// First clean index after all task pools.
    pub fn end(&self) -> usize {
        self.val.1
    }
}

fn check_frames(spec: &ArtifactSpec, source: &CleanSource) -> Result<()> {
    let needed = 2 * spec.frame_radius() + 1;
    if needed > source.config().num_frames {
        return Err(Error::Config(format!(
            "{} needs {needed} frames but data.num_frames = {}",
            spec.id(),
            source.config().num_frames
        )));
    }
    Ok(())
}

/// Applies every spec to each clean sequence in `range`. The result holds
/// one pair list per spec, in spec order.
pub fn simulate_pairs(
    specs: &[ArtifactSpec],
    source: &CleanSource,
    range: (usize, usize),
) -> Result<Vec<Vec<PairedSample>>> {
    for spec in specs {
        spec.validate()?;
        check_frames(spec, source)?;
    }
    source.require(range.1)?;
    let rows: Vec<Vec<PairedSample>> = (range.0..range.1)
        .into_par_iter()
        .map(|index| {
            let cine = source.cine(index)?;
            specs.iter().map(|spec| apply_spec(&cine, spec)).collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..specs.len())
        .map(|t| rows.iter().map(|row| row[t].clone()).collect())
        .collect())
}

/// Builds one task per training spec, all drawing on the same clean
/// sequences.
pub fn build_tasks(specs: &[ArtifactSpec], source: &CleanSource, layout: PoolLayout) -> Result<Vec<Task>> {
    let mut ids = BTreeSet::new();
    for spec in specs {
        score_task(spec)?;
        if !ids.insert(spec.id()) {
            return Err(Error::Config(format!("duplicate task {}", spec.id())));
        }
    }
    let pairs = simulate_pairs(specs, source, (0, layout.end()))?;
    specs
        .iter()
        .zip(pairs)
        .map(|(spec, all)| {
            let take = |range: (usize, usize)| all[range.0..range.1].to_vec();
            Task::new(
                spec.clone(),
                take(layout.support),
                take(layout.query),
                take(layout.val),
            )
        })
        .collect()
}

/// The nine training tasks: three motion, three undersampling and three
/// super-resolution levels.
pub fn build_train_tasks(config: &TaskConfig, source: &CleanSource) -> Result<Vec<Task>> {
    let data = source.config();
    let layout = PoolLayout::new(data.train_per_task, data.val_per_task)?;
    build_tasks(&config.train_specs(), source, layout)
}
