use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AdamState;
use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::model::{Model, ParamSet};
use crate::tasks::{sample_query, sample_support, Task};

/// How the outer gradient treats the inner updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaOrder {
    /// Inner-update Jacobians replaced by the identity.
    First,
    /// Exact differentiation through every inner step.
    Second,
}

/// Support and query batches drawn from one task for one meta-iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub task_id: String,
    pub support: Vec<PairedSample>,
    pub query: Vec<PairedSample>,
}

impl Episode {
    pub fn sample(task: &Task, n_spt: usize, n_qry: usize, rng: &mut impl Rng) -> Result<Self> {
        let support = sample_support(task, n_spt, rng)?;
        let query = sample_query(task, n_qry, rng)?;
        Ok(Self {
            task_id: task.id.clone(),
            support,
            query,
        })
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::arg("adaptation needs at least one step"));
    }
    Ok(())
}

/// Intermediate iterates `phi_0 = theta, ..., phi_steps` of plain gradient
/// descent on `support`.
fn inner_path(
    model: &Model,
    theta: &ParamSet,
    support: &[PairedSample],
    steps: usize,
    alpha: f64,
) -> Result<Vec<ParamSet>> {
    check_steps(steps)?;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(theta.clone());
    for _ in 0..steps {
        let phi = path.last().unwrap();
        let (_, grad) = model.loss_and_grad(phi, support)?;
        let next = phi.axpy(-alpha, &grad)?;
        path.push(next);
    }
    Ok(path)
}

/// `steps` gradient-descent steps of size `alpha` on a fixed support batch.
pub fn adapt_on(
    model: &Model,
    theta: &ParamSet,
    support: &[PairedSample],
    steps: usize,
    alpha: f64,
) -> Result<ParamSet> {
    Ok(inner_path(model, theta, support, steps, alpha)?.pop().unwrap())
}

/// Draws one support batch of `n_spt` pairs from `task` and adapts on it.
pub fn adapt(
    model: &Model,
    theta: &ParamSet,
    task: &Task,
    steps: usize,
    alpha: f64,
    n_spt: usize,
    rng: &mut impl Rng,
) -> Result<ParamSet> {
    check_steps(steps)?;
    let support = sample_support(task, n_spt, rng)?;
    adapt_on(model, theta, &support, steps, alpha)
}

/// Query loss after adaptation and its gradient with respect to `theta`.
pub fn task_meta_gradient(
    model: &Model,
    theta: &ParamSet,
    episode: &Episode,
    steps: usize,
    alpha: f64,
    order: MetaOrder,
) -> Result<(f64, ParamSet)> {
    let path = inner_path(model, theta, &episode.support, steps, alpha)?;
    let (loss, mut grad) = model.loss_and_grad(path.last().unwrap(), &episode.query)?;
    if order == MetaOrder::Second {
        for phi in path[..steps].iter().rev() {
            let (_, hv) = model.grad_and_hvp(phi, &grad, &episode.support)?;
            grad = grad.axpy(-alpha, &hv)?;
        }
    }
    Ok((loss, grad))
}

/// Summed outer gradient of a task mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaGradient {
    pub grad: ParamSet,
    /// Post-adaptation query loss per episode, in episode order.
    pub query_losses: Vec<(String, f64)>,
}

impl MetaGradient {
    pub fn meta_loss(&self) -> f64 {
        self.query_losses.iter().map(|(_, l)| l).sum()
    }
}

/// Sum over episodes of the post-adaptation query loss gradient. Episodes
/// are processed concurrently and reduced in the order given.
pub fn meta_gradient(
    model: &Model,
    theta: &ParamSet,
    episodes: &[Episode],
    steps: usize,
    alpha: f64,
    order: MetaOrder,
) -> Result<MetaGradient> {
    if episodes.is_empty() {
        return Err(Error::arg("meta-gradient needs at least one episode"));
    }
    let parts: Vec<(f64, ParamSet)> = episodes
        .par_iter()
        .map(|e| task_meta_gradient(model, theta, e, steps, alpha, order))
        .collect::<Result<_>>()?;
    let mut grad = theta.zeros_like();
    let mut query_losses = Vec::with_capacity(parts.len());
    for (episode, (loss, g)) in episodes.iter().zip(parts) {
        grad.add_assign(&g)?;
        query_losses.push((episode.task_id.clone(), loss));
    }
    Ok(MetaGradient { grad, query_losses })
}

/// The bi-level objective itself: summed query loss after adaptation.
pub fn meta_objective(
    model: &Model,
    theta: &ParamSet,
    episodes: &[Episode],
    steps: usize,
    alpha: f64,
) -> Result<f64> {
    let losses: Vec<f64> = episodes
        .par_iter()
        .map(|e| {
            let phi = adapt_on(model, theta, &e.support, steps, alpha)?;
            model.loss(&phi, &e.query)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum())
}

/// One outer Adam update of `theta` on the meta-gradient of `episodes`.
pub fn meta_step(
    model: &Model,
    theta: &ParamSet,
    episodes: &[Episode],
    steps: usize,
    alpha: f64,
    adam: &mut AdamState,
    order: MetaOrder,
) -> Result<(ParamSet, MetaGradient)> {
    let mg = meta_gradient(model, theta, episodes, steps, alpha, order)?;
    let next = adam.step(theta, &mg.grad)?;
    Ok((next, mg))
}
