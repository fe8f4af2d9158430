//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits non-zero if any fails.

use std::fs;
use std::time::Instant;

use cmaml::artifacts::{
    apply_gamma, apply_ghosting, apply_motion, apply_noise, apply_undersampling, degrade_image,
    make_cartesian_mask, ArtifactSpec, CartesianMask,
};
use cmaml::config::RunConfig;
use cmaml::curriculum::{default_schedule, PacingSchedule};
use cmaml::data::{CineSequence, CleanSource, DataConfig, ImageTensor, PairedSample};
use cmaml::metrics::{psnr, ssim};
use cmaml::model::{save_checkpoint, LossKind, Model, ModelConfig, ParamSet};
use cmaml::tasks::{build_train_tasks, sample_support, Task, TaskConfig};
use cmaml::trainers::{
    adapt_on, meta_gradient, meta_objective, train, train_cmaml, train_maml, write_history, Episode,
    MetaOrder, Method, TrainRunConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

type Outcome = (bool, String);

fn random_image(rng: &mut ChaCha8Rng, n: usize) -> ImageTensor {
    ImageTensor::from_fn(n, n, |_, _| rng.random_range(0.0..1.0))
}

/// Unitary 2D DFT by direct summation; `sign` is -1 forward, +1 inverse.
fn dft_sum(values: &[Complex64], n: usize, sign: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for u in 0..n {
        for v in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..n {
                for c in 0..n {
                    let phase = sign * 2.0 * std::f64::consts::PI * ((u * r + v * c) as f64) / n as f64;
                    acc += values[r * n + c] * Complex64::from_polar(1.0, phase);
                }
            }
            out[u * n + v] = acc / n as f64;
        }
    }
    out
}

fn to_complex(image: &ImageTensor) -> Vec<Complex64> {
    image
        .pixels()
        .iter()
        .map(|&p| Complex64::new(p as f64, 0.0))
        .collect()
}

fn magnitude_clipped(values: &[Complex64]) -> Vec<f64> {
    values.iter().map(|z| z.norm().clamp(0.0, 1.0)).collect()
}

fn max_abs(a: &ImageTensor, b: &[f64]) -> f64 {
    a.pixels()
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y).abs())
        .fold(0.0, f64::max)
}

/// Row of the unshifted spectrum holding signed frequency `m - n/2`.
fn unshifted_row(centered: usize, n: usize) -> usize {
    (centered + n - n / 2) % n
}

fn criterion_1_operator_oracles() -> Outcome {
    let start = Instant::now();
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_us: f64 = 0.0;
    for (accel, seed) in [(2, 0), (3, 7), (4, 11)] {
        let image = random_image(&mut rng, n);
        let mask = make_cartesian_mask((n, n), accel, seed).unwrap();
        let mut k = dft_sum(&to_complex(&image), n, -1.0);
        for centered in 0..n {
            if !mask.lines()[centered] {
                let u = unshifted_row(centered, n);
                k[u * n..(u + 1) * n].fill(Complex64::new(0.0, 0.0));
            }
        }
        let oracle = magnitude_clipped(&dft_sum(&k, n, 1.0));
        worst_us = worst_us.max(max_abs(&apply_undersampling(&image, &mask).unwrap(), &oracle));
    }

    let frames: Vec<ImageTensor> = (0..5)
        .map(|_| random_image(&mut rng, n).map(|p| p * 0.3))
        .collect();
    let mut worst_motion: f64 = 0.0;
    for target in [0, 2, 4] {
        let seq = CineSequence::new(frames.clone(), target).unwrap();
        let l = target.clamp(1, 3);
        let spectra: Vec<Vec<Complex64>> = (l - 1..=l + 1)
            .map(|j| dft_sum(&to_complex(&frames[j]), n, -1.0))
            .collect();
        let mut k = vec![Complex64::new(0.0, 0.0); n * n];
        for centered in 0..n {
            let u = unshifted_row(centered, n);
            k[u * n..(u + 1) * n].copy_from_slice(&spectra[centered % 3][u * n..(u + 1) * n]);
        }
        let oracle = magnitude_clipped(&dft_sum(&k, n, 1.0));
        worst_motion = worst_motion.max(max_abs(&apply_motion(&seq, 1).unwrap(), &oracle));
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst_us < 1e-6 && worst_motion < 1e-6 && secs < 10.0,
        format!("undersampling max err {worst_us:.2e}, motion max err {worst_motion:.2e}, {secs:.2}s"),
    )
}

fn criterion_2_operator_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let image = random_image(&mut rng, 32);
    let err = |out: &ImageTensor| max_abs(out, &image.to_f64());
    let full = CartesianMask::full(32, 32);
    let checks = [
        ("all-ones mask", err(&apply_undersampling(&image, &full).unwrap())),
        ("gamma 1", err(&apply_gamma(&image, 1.0).unwrap())),
        ("noise 0", err(&apply_noise(&image, 0.0, 3).unwrap())),
        ("ghosting 0", err(&apply_ghosting(&image, 4, 0, 0.0).unwrap())),
        (
            "ghosting 0 axis 1",
            err(&apply_ghosting(&image, 3, 1, 0.0).unwrap()),
        ),
    ];
    let mut worst: f64 = checks.iter().map(|c| c.1).fold(0.0, f64::max);
    for s in 0..=3 {
        let seq = CineSequence::new(vec![image.clone(); 2 * s + 1 + 2], s + 1).unwrap();
        worst = worst.max(err(&apply_motion(&seq, s).unwrap()));
    }
    let none = degrade_image(&image, &ArtifactSpec::None).unwrap();
    let exact = none
        .pixels()
        .iter()
        .zip(image.pixels())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    (
        worst < 1e-5 && exact,
        format!("max deviation {worst:.2e}, identity spec exact: {exact}"),
    )
}

fn tiny_model() -> Model {
    Model::new(ModelConfig {
        num_layers: 2,
        hidden_channels: 4,
        kernel: 3,
        residual: true,
        loss: LossKind::L1,
    })
    .unwrap()
}

fn random_pairs(rng: &mut ChaCha8Rng, count: usize) -> Vec<PairedSample> {
    (0..count)
        .map(|_| PairedSample::new(random_image(rng, 8), random_image(rng, 8)).unwrap())
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn central_difference(theta: &ParamSet, i: usize, h: f64, f: impl Fn(&ParamSet) -> f64) -> f64 {
    let mut plus = theta.clone();
    plus.set_flat(i, theta.get_flat(i) + h);
    let mut minus = theta.clone();
    minus.set_flat(i, theta.get_flat(i) - h);
    (f(&plus) - f(&minus)) / (2.0 * h)
}

fn criterion_3_gradients_match_finite_differences() -> Outcome {
    let start = Instant::now();
    let model = tiny_model();
    let h = 1e-5;
    let (mut loss_checked, mut meta_checked) = (0, 0);
    let (mut loss_worst, mut meta_worst): (f64, f64) = (0.0, 0.0);
    for seed in 0..2u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let theta = model.init_params(seed);
        let batch = random_pairs(&mut rng, 3);
        let (_, grad) = model.loss_and_grad(&theta, &batch).unwrap();
        let episodes: Vec<Episode> = (0..2)
            .map(|k| Episode {
                task_id: format!("t{k}"),
                support: random_pairs(&mut rng, 2),
                query: random_pairs(&mut rng, 2),
            })
            .collect();
        let alpha = 0.05;
        let mg = meta_gradient(&model, &theta, &episodes, 1, alpha, MetaOrder::Second).unwrap();
        for i in 0..theta.num_elements() {
            let fd = central_difference(&theta, i, h, |p| model.loss(p, &batch).unwrap());
            loss_worst = loss_worst.max(rel_err(grad.get_flat(i), fd));
            loss_checked += 1;
            let fd = central_difference(&theta, i, h, |p| {
                meta_objective(&model, p, &episodes, 1, alpha).unwrap()
            });
            meta_worst = meta_worst.max(rel_err(mg.grad.get_flat(i), fd));
            meta_checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        loss_worst < 1e-3 && meta_worst < 1e-3 && loss_checked >= 100 && meta_checked >= 100 && secs < 120.0,
        format!(
            "loss grad worst rel {loss_worst:.2e} over {loss_checked} coords, \
             meta grad worst rel {meta_worst:.2e} over {meta_checked} coords, {secs:.1}s"
        ),
    )
}

fn small_tasks() -> Vec<Task> {
    let data = DataConfig {
        phantom_size: 32,
        crop_size: 24,
        num_frames: 7,
        train_per_task: 10,
        val_per_task: 2,
        ..DataConfig::default()
    };
    build_train_tasks(&TaskConfig::default(), &CleanSource::new(&data, 1).unwrap()).unwrap()
}

fn small_model() -> Model {
    Model::new(ModelConfig {
        num_layers: 3,
        hidden_channels: 4,
        ..ModelConfig::default()
    })
    .unwrap()
}

fn criterion_4_algorithm_fidelity() -> Outcome {
    let tasks = small_tasks();
    let model = small_model();
    let config = TrainRunConfig {
        max_epochs: 5,
        seed: 9,
        ..TrainRunConfig::default()
    };
    let maml = train_maml(&model, &tasks, &config).unwrap();
    let ids = tasks.iter().map(|t| t.id.clone()).collect();
    let single = PacingSchedule::single_tier(ids, 1, 5).unwrap();
    let cmaml = train_cmaml(&model, &tasks, &single, &config).unwrap();
    let bits = |p: &ParamSet| p.flat_values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let same_params = bits(&maml.params) == bits(&cmaml.params);
    let same_losses = maml.history.iter().zip(&cmaml.history).all(|(a, b)| {
        a.per_task_query_loss == b.per_task_query_loss && a.train_loss.to_bits() == b.train_loss.to_bits()
    });

    let theta = model.init_params(4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let episodes: Vec<Episode> = tasks[..3]
        .iter()
        .map(|t| Episode::sample(t, 5, 5, &mut rng).unwrap())
        .collect();
    let mg = meta_gradient(&model, &theta, &episodes, 1, 0.0, MetaOrder::Second).unwrap();
    let query: Vec<PairedSample> = episodes.iter().flat_map(|e| e.query.clone()).collect();
    let (_, joint) = model.loss_and_grad(&theta, &query).unwrap();
    // the meta objective sums per-task means; the pooled loss averages over all tasks
    let joint = joint.scale(episodes.len() as f64);
    let diff = mg.grad.max_abs_diff(&joint).unwrap();
    (
        same_params && same_losses && diff < 1e-6,
        format!(
            "single-tier cmaml == maml bitwise: {}, alpha=0 gradient diff {diff:.2e}",
            same_params && same_losses
        ),
    )
}

fn criterion_5_schedule_exactness() -> Outcome {
    let data = DataConfig {
        phantom_size: 32,
        crop_size: 24,
        num_frames: 7,
        train_per_task: 2,
        val_per_task: 0,
        ..DataConfig::default()
    };
    let tasks = build_train_tasks(&TaskConfig::default(), &CleanSource::new(&data, 1).unwrap()).unwrap();
    let schedule = default_schedule(&tasks, 200).unwrap();
    let mut exact = schedule.step_epochs() == [1, 68, 135];
    for (epoch, count, steps) in [
        (1, 3, 1),
        (67, 3, 1),
        (68, 6, 2),
        (134, 6, 2),
        (135, 9, 3),
        (200, 9, 3),
    ] {
        let (visible, u) = schedule.available_tasks(epoch).unwrap();
        exact &= visible.len() == count && u == steps;
    }
    let mut cumulative = true;
    let mut previous: Vec<String> = Vec::new();
    for epoch in 1..=200 {
        let (visible, _) = schedule.available_tasks(epoch).unwrap();
        cumulative &= previous.iter().all(|id| visible.contains(id));
        previous = visible;
    }
    (
        exact && cumulative,
        format!(
            "boundaries {:?}, exact sizes and U: {exact}, cumulative: {cumulative}",
            schedule.step_epochs()
        ),
    )
}

fn criterion_6_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let target = ImageTensor::from_fn(32, 32, |_, _| rng.random_range(0.0..0.9));
    let shifted = target.map(|p| p + 0.1);
    let p = psnr(&shifted, &target, 1.0).unwrap();
    let self_ssim = ssim(&target, &target, 1.0).unwrap();
    let other = random_image(&mut rng, 32);
    let asym = (ssim(&target, &other, 1.0).unwrap() - ssim(&other, &target, 1.0).unwrap()).abs();
    (
        (p - 20.0).abs() <= 0.01 && self_ssim == 1.0 && asym <= 1e-12,
        format!("psnr {p:.4} dB, ssim(self) {self_ssim}, ssim asymmetry {asym:.1e}"),
    )
}

fn criterion_8_determinism() -> Outcome {
    let tasks = small_tasks();
    let model = small_model();
    let config = TrainRunConfig {
        method: Method::Cmaml,
        max_epochs: 3,
        seed: 17,
        ..TrainRunConfig::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    for run in 0..2 {
        let dir = tmp.path().join(format!("run{run}"));
        let outcome = train(&model, &tasks, None, &config, &mut |_: &_, _: &_| Ok(())).unwrap();
        save_checkpoint(
            &dir.join("final"),
            &outcome.params,
            model.config(),
            "cmaml",
            17,
            3,
        )
        .unwrap();
        let mut history = outcome.history;
        for r in &mut history {
            r.wall_time_s = 0.0;
        }
        write_history(&dir.join("log.jsonl"), &history).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        for entry in fs::read_dir(dir.join("final")).unwrap() {
            let path = entry.unwrap().path();
            files.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            ));
        }
        files.sort();
        files.push(("log.jsonl".into(), fs::read(dir.join("log.jsonl")).unwrap()));
        snapshots.push(files);
    }
    let identical = snapshots[0] == snapshots[1];
    (
        identical,
        format!(
            "{} files compared, byte-identical: {identical}",
            snapshots[0].len()
        ),
    )
}

/// The shipped desk profile; the trend run reads it so the two cannot drift.
fn desk_config() -> RunConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");
    RunConfig::load(std::path::Path::new(path)).unwrap()
}

fn mean_psnr(model: &Model, params: Option<&ParamSet>, tasks: &[Task]) -> f64 {
    let mut values = Vec::new();
    for task in tasks {
        for pair in &task.val_pool {
            let pred = match params {
                Some(theta) => model.predict(theta, &pair.degraded).unwrap(),
                None => pair.degraded.clone(),
            };
            values.push(psnr(&pred, &pair.clean, 1.0).unwrap());
        }
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn criterion_7_desk_trend() -> Outcome {
    let start = Instant::now();
    let desk = desk_config();
    assert_eq!((desk.data.train_per_task, desk.data.val_per_task), (64, 16));
    assert_eq!(desk.train.max_epochs, 20);
    let source = CleanSource::new(&desk.data, desk.seed).unwrap();
    let tasks = build_train_tasks(&desk.tasks, &source).unwrap();
    assert_eq!(tasks.len(), 9);
    let model = Model::new(desk.model.clone()).unwrap();
    let baseline = mean_psnr(&model, None, &tasks);

    let mut gains = Vec::new();
    let mut adaptation = Vec::new();
    for method in Method::ALL {
        let config = TrainRunConfig {
            method,
            ..desk.train.clone()
        };
        let began = Instant::now();
        let outcome = train(&model, &tasks, None, &config, &mut |_: &_, _: &_| Ok(())).unwrap();
        let gain = mean_psnr(&model, Some(&outcome.params), &tasks) - baseline;
        gains.push((method, gain, began.elapsed().as_secs_f64() / 60.0));
        if method == Method::Joint {
            continue;
        }
        let steps = outcome.history.last().unwrap().steps;
        // worst task: fewest seeds in which adaptation lowered the held-out loss
        let mut worst = 5;
        for task in &tasks {
            let mut wins = 0;
            for seed in 0..5 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let support = sample_support(task, config.n_spt, &mut rng).unwrap();
                let phi = adapt_on(&model, &outcome.params, &support, steps, config.alpha).unwrap();
                let before = model.loss(&outcome.params, &task.val_pool).unwrap();
                let after = model.loss(&phi, &task.val_pool).unwrap();
                wins += usize::from(after < before);
            }
            worst = worst.min(wins);
        }
        adaptation.push((method, worst));
    }
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let gains_ok = gains.iter().all(|(_, g, _)| *g >= 2.0);
    let adapt_ok = adaptation.iter().all(|(_, w)| *w >= 4);
    let detail = format!(
        "degraded {baseline:.2} dB; gains {}; adaptation wins (worst task, of 5) {}; {minutes:.1} min",
        gains
            .iter()
            .map(|(m, g, t)| format!("{m} {g:+.2} dB in {t:.1} min"))
            .collect::<Vec<_>>()
            .join(", "),
        adaptation
            .iter()
            .map(|(m, w)| format!("{m} {w}"))
            .collect::<Vec<_>>()
            .join(", "),
    );
    (gains_ok && adapt_ok && minutes <= 45.0, detail)
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion_1_operator_oracles),
        (2, criterion_2_operator_identities),
        (3, criterion_3_gradients_match_finite_differences),
        (4, criterion_4_algorithm_fidelity),
        (5, criterion_5_schedule_exactness),
        (6, criterion_6_metric_oracles),
        (7, criterion_7_desk_trend),
        (8, criterion_8_determinism),
    ];
    // optional criterion numbers on the command line select a subset
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (number, check) in criteria {
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let (pass, detail) =
            std::panic::catch_unwind(check).unwrap_or_else(|_| (false, "panicked".to_string()));
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {number}: {verdict} ({detail})");
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
