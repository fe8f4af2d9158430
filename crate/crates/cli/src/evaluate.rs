//! Scores trained runs on the seen, unseen and composite corpus sets.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cmaml::config::RunConfig;
use cmaml::data::{save_tensor, ImageTensor, Tensor};
use cmaml::metrics::{
    evaluate_suite, per_image_csv, render_table, summaries_to_csv, write_text, EvalCase, EvalRecord,
    INPUT_METHOD,
};
use cmaml::model::{Model, ParamSet};
use cmaml::trainers::adapt_on;
use cmaml::Error;

use crate::corpus::{load_eval_cases, load_train_tasks, prepare_out_dir, COMPOSITE_DIR, UNSEEN_DIR};
use crate::runs::{load_run, LoadedRun};

pub const SEEN: &str = "seen";
pub const PER_IMAGE_FILE: &str = "per_image.csv";
pub const METHODS_FILE: &str = "methods.json";
pub const PANEL_DIR: &str = "panels";
pub const TARGET_PANEL: &str = "target";
pub const DEGRADED_PANEL: &str = "degraded";

/// Column names: the method, or the run directory name when two runs share
/// a method.
fn column_names(runs: &[LoadedRun]) -> Vec<String> {
    runs.iter()
        .map(|r| {
            let shared = runs.iter().filter(|o| o.method == r.method).count() > 1;
            if shared {
                r.dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| r.method.clone())
            } else {
                r.method.clone()
            }
        })
        .collect()
}

fn check_compatible(runs: &[LoadedRun]) -> Result<()> {
    let Some(first) = runs.first() else {
        return Err(Error::Argument("evaluate needs at least one run directory".into()).into());
    };
    for run in &runs[1..] {
        if run.config.model != first.config.model {
            return Err(Error::Config(format!(
                "model of {} differs from {}",
                run.dir.display(),
                first.dir.display()
            ))
            .into());
        }
    }
    Ok(())
}

fn stack(images: Vec<ImageTensor>) -> Result<Tensor> {
    let (h, w) = images.first().map(|i| i.shape()).unwrap_or((0, 0));
    let n = images.len();
    let values = images.into_iter().flat_map(|i| i.into_pixels()).collect();
    Ok(Tensor::f32(vec![n, h, w], values)?)
}

/// Writes the first `count` targets, inputs and predictions of every case.
fn write_panels(
    out: &Path,
    group: &str,
    model: &Model,
    methods: &[(String, Option<ParamSet>)],
    cases: &[EvalCase],
    count: usize,
) -> Result<()> {
    for case in cases {
        let dir = out.join(PANEL_DIR).join(group).join(&case.artifact);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let pairs = &case.pairs[..count.min(case.pairs.len())];
        let targets = pairs.iter().map(|p| p.clean.clone()).collect();
        let inputs = pairs.iter().map(|p| p.degraded.clone()).collect();
        save_tensor(dir.join(format!("{TARGET_PANEL}.mrt")), &stack(targets)?)?;
        save_tensor(dir.join(format!("{DEGRADED_PANEL}.mrt")), &stack(inputs)?)?;
        for (name, params) in methods {
            let Some(theta) = params else { continue };
            let preds = pairs
                .iter()
                .map(|p| model.predict(theta, &p.degraded))
                .collect::<cmaml::Result<Vec<_>>>()?;
            save_tensor(dir.join(format!("{name}.mrt")), &stack(preds)?)?;
        }
    }
    Ok(())
}

fn write_table(out: &Path, group: &str, records: &[EvalRecord], methods: &[String]) -> Result<()> {
    let summaries: Vec<_> = records.iter().map(EvalRecord::summary).collect();
    write_text(&out.join(format!("{group}.csv")), &summaries_to_csv(&summaries)?)?;
    write_text(
        &out.join(format!("{group}.txt")),
        &render_table(&summaries, methods)?,
    )?;
    Ok(())
}

/// Seen-task scores after adapting each meta-learned run on the first
/// support pairs of every task.
fn adapted_seen_records(
    model: &Model,
    dataset: &str,
    runs: &[(String, &LoadedRun)],
    corpus: &Path,
    config: &RunConfig,
) -> Result<Vec<EvalRecord>> {
    let tasks = load_train_tasks(corpus, config)?;
    let steps = config.eval.adapt_steps;
    let mut records = Vec::new();
    for task in &tasks {
        let n = config.train.n_spt.min(task.support_pool.len());
        let methods = runs
            .iter()
            .map(|(name, run)| {
                let alpha = run.config.train.alpha;
                let phi = adapt_on(model, &run.params, &task.support_pool[..n], steps, alpha)?;
                Ok((format!("{name}+adapt"), Some(phi)))
            })
            .collect::<Result<Vec<_>>>()?;
        let case = EvalCase {
            artifact: task.id.clone(),
            pairs: task.val_pool.clone(),
        };
        records.extend(evaluate_suite(model, dataset, &methods, &[case])?);
    }
    Ok(records)
}

/// Evaluates `run_dirs` and writes CSV summaries, per-image scores, text
/// tables and panel tensors into `out`.
pub fn evaluate_runs(run_dirs: &[PathBuf], corpus: &Path, out: &Path, force: bool) -> Result<()> {
    let runs = run_dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    check_compatible(&runs)?;
    let config = &runs[0].config;
    let model = Model::new(config.model.clone())?;
    let dataset = match config.data.source {
        cmaml::data::SourceKind::Phantom => "phantom",
        cmaml::data::SourceKind::Raw => "raw",
    };

    let names = column_names(&runs);
    let mut methods: Vec<(String, Option<ParamSet>)> = vec![(INPUT_METHOD.to_string(), None)];
    methods.extend(
        names
            .iter()
            .cloned()
            .zip(runs.iter().map(|r| Some(r.params.clone()))),
    );
    let method_names: Vec<String> = methods.iter().map(|(n, _)| n.clone()).collect();

    let seen: Vec<EvalCase> = load_train_tasks(corpus, config)?
        .into_iter()
        .map(|t| EvalCase {
            artifact: t.id,
            pairs: t.val_pool,
        })
        .collect();
    let groups = [
        (
            UNSEEN_DIR,
            load_eval_cases(corpus, UNSEEN_DIR, &config.eval.unseen)?,
        ),
        (
            COMPOSITE_DIR,
            load_eval_cases(corpus, COMPOSITE_DIR, &config.eval.composite)?,
        ),
        (SEEN, seen),
    ];

    prepare_out_dir(out, force)?;
    let mut all = Vec::new();
    for (group, cases) in &groups {
        let mut records = evaluate_suite(&model, dataset, &methods, cases)?;
        let mut columns = method_names.clone();
        if *group == SEEN && config.eval.adapt_steps > 0 {
            let meta: Vec<(String, &LoadedRun)> = names
                .iter()
                .cloned()
                .zip(&runs)
                .filter(|(_, r)| r.method != "joint")
                .collect();
            columns.extend(meta.iter().map(|(n, _)| format!("{n}+adapt")));
            records.extend(adapted_seen_records(&model, dataset, &meta, corpus, config)?);
        }
        write_table(out, group, &records, &columns)?;
        write_panels(out, group, &model, &methods, cases, config.eval.panel_images)?;
        all.extend(records);
    }
    write_text(&out.join(PER_IMAGE_FILE), &per_image_csv(&all)?)?;
    let listing = serde_json::to_string_pretty(&method_names)?;
    write_text(&out.join(METHODS_FILE), &(listing + "\n"))?;
    Ok(())
}
