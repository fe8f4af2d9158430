use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TRAIN_IDS: [&str; 9] = [
    "motion_s1",
    "motion_s2",
    "motion_s3",
    "us_x02",
    "us_x04",
    "us_x06",
    "sr_x2",
    "sr_x3",
    "sr_x5",
];

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let corpus = dir.join("corpus");
    let text = format!(
        r#"seed = 5
workers = 1

[data]
phantom_size = 32
crop_size = 24
train_per_task = 8
val_per_task = 2
eval_images = 3
corpus_dir = "{}"

[model]
num_layers = 2
hidden_channels = 4

[train]
max_epochs = 3
checkpoint_every = 2
n_spt = 2
n_qry = 2
{extra}
"#,
        corpus.display()
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn cmaml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmaml"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cmaml(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn subdirs(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

/// Log lines with the wall-clock field removed.
fn log_without_times(run: &Path) -> Vec<Value> {
    fs::read_to_string(run.join("log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_time_s");
            v
        })
        .collect()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for name in subdirs(dir) {
        let path = dir.join(&name);
        if path.is_dir() {
            for (sub, bytes) in dir_bytes(&path) {
                files.push((format!("{name}/{sub}"), bytes));
            }
        } else {
            files.push((name, fs::read(&path).unwrap()));
        }
    }
    files
}

#[test]
fn simulate_writes_every_task_and_evaluation_set() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path(), "");
    let corpus = tmp.path().join("corpus");
    ok(&["simulate", "--config", s(&config)]);

    assert_eq!(
        subdirs(&corpus),
        ["composite", "manifest.json", "train", "unseen"]
    );
    let mut train = TRAIN_IDS.map(String::from).to_vec();
    train.sort();
    assert_eq!(subdirs(&corpus.join("train")), train);
    assert_eq!(subdirs(&corpus.join("unseen")).len(), 10);
    assert_eq!(subdirs(&corpus.join("composite")).len(), 5);

    let manifest: Value = serde_json::from_slice(&fs::read(corpus.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    for entry in manifest["entries"].as_array().unwrap() {
        let expected = match entry["split"].as_str().unwrap() {
            "support" | "query" => 4,
            "val" => 2,
            "eval" => 3,
            other => panic!("unexpected split {other}"),
        };
        assert_eq!(entry["count"], expected, "{entry}");
        assert!(corpus.join(entry["path"].as_str().unwrap()).is_file());
    }

    let first = fs::read(corpus.join("manifest.json")).unwrap();
    ok(&["simulate", "--config", s(&config), "--force"]);
    assert_eq!(fs::read(corpus.join("manifest.json")).unwrap(), first);
}

#[test]
fn simulate_refuses_a_non_empty_directory() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path(), "");
    let out = tmp.path().join("busy");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let result = cmaml(&["simulate", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("--force"));
    assert!(out.join("keep.txt").is_file());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(cmaml(&[]).status.code(), Some(1));
    assert_eq!(
        cmaml(&["train", "--method", "sgd", "--seed", "1"]).status.code(),
        Some(1)
    );
    assert_eq!(
        cmaml(&["train", "--device", "gpu", "--seed", "1"]).status.code(),
        Some(1)
    );
    assert_eq!(cmaml(&["simulate"]).status.code(), Some(1));
    assert_eq!(cmaml(&["--help"]).status.code(), Some(0));

    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[train]\nbogus = 3\n").unwrap();
    assert_eq!(cmaml(&["simulate", "--config", s(&bad)]).status.code(), Some(1));
    let unseeded = tmp.path().join("unseeded.toml");
    fs::write(&unseeded, "[train]\nmax_epochs = 3\n").unwrap();
    assert_eq!(
        cmaml(&["simulate", "--config", s(&unseeded)]).status.code(),
        Some(1)
    );
}

#[test]
fn training_without_a_corpus_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path(), "");
    let out = cmaml(&[
        "train",
        "--config",
        s(&config),
        "--out",
        s(&tmp.path().join("runs")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cmaml simulate"));
}

#[test]
fn diverging_training_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path(), "beta = 1e300\nmethod = \"joint\"");
    ok(&["simulate", "--config", s(&config)]);
    let out = cmaml(&[
        "train",
        "--config",
        s(&config),
        "--quiet",
        "--out",
        s(&tmp.path().join("runs")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn json_configs_are_accepted() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("run.json");
    let corpus = tmp.path().join("corpus");
    let text = serde_json::json!({
        "seed": 2,
        "data": {
            "phantom_size": 32,
            "crop_size": 24,
            "train_per_task": 4,
            "val_per_task": 1,
            "eval_images": 1,
            "corpus_dir": corpus,
        },
    });
    fs::write(&config, text.to_string()).unwrap();
    ok(&["simulate", "--config", s(&config)]);
    let manifest: Value = serde_json::from_slice(&fs::read(corpus.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 2);
}

#[test]
fn train_evaluate_report_pipeline() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path(), "");
    let runs = tmp.path().join("runs");
    ok(&["simulate", "--config", s(&config)]);

    let mut dirs = Vec::new();
    for method in ["joint", "maml", "cmaml"] {
        let dir = ok(&[
            "train",
            "--config",
            s(&config),
            "--method",
            method,
            "--quiet",
            "--out",
            s(&runs),
        ]);
        let dir = PathBuf::from(dir.trim());
        assert_eq!(dir.file_name().unwrap(), format!("{method}-seed5").as_str());
        assert_eq!(log_without_times(&dir).len(), 3);
        assert_eq!(subdirs(&dir.join("checkpoints")), ["epoch_0002", "final"]);
        assert!(dir.join("config.toml").is_file());
        dirs.push(dir);
    }

    // The echoed config reproduces the run.
    let again = tmp.path().join("again");
    ok(&[
        "train",
        "--config",
        s(&dirs[2].join("config.toml")),
        "--quiet",
        "--out",
        s(&again),
    ]);
    let rerun = again.join("cmaml-seed5");
    assert_eq!(log_without_times(&rerun), log_without_times(&dirs[2]));
    assert_eq!(
        dir_bytes(&rerun.join("checkpoints")),
        dir_bytes(&dirs[2].join("checkpoints"))
    );

    // A second train into the same run directory needs --force.
    let busy = cmaml(&[
        "train",
        "--config",
        s(&config),
        "--method",
        "joint",
        "--quiet",
        "--out",
        s(&runs),
    ]);
    assert_eq!(busy.status.code(), Some(1));

    let eval = tmp.path().join("eval");
    let mut args = vec!["evaluate"];
    args.extend(dirs.iter().map(|d| s(d)));
    args.extend(["--out", s(&eval)]);
    ok(&args);
    for name in ["unseen", "composite", "seen"] {
        assert!(eval.join(format!("{name}.csv")).is_file());
        assert!(eval.join(format!("{name}.txt")).is_file());
    }
    let unseen = fs::read_to_string(eval.join("unseen.csv")).unwrap();
    assert_eq!(
        unseen.lines().next().unwrap(),
        "dataset,artifact,method,psnr_mean,psnr_std,ssim_mean,ssim_std,n"
    );
    assert_eq!(unseen.lines().count(), 1 + 10 * 4);
    assert!(unseen.contains("phantom,none,input,inf,"));
    let composite = fs::read_to_string(eval.join("composite.txt")).unwrap();
    let body: Vec<&str> = composite.lines().filter(|l| l.starts_with("comp(")).collect();
    assert_eq!(body.len(), 5);
    let header = composite.lines().next().unwrap();
    for col in ["input", "joint", "maml", "cmaml"] {
        assert!(header.contains(col), "{header}");
    }

    let figures = tmp.path().join("figures");
    let printed = ok(&["report", s(&eval), "--out", s(&figures)]);
    assert!(printed.starts_with("wrote"));
    assert_eq!(subdirs(&figures.join("boxplots")).len(), 10 + 5 + 9);
    assert!(figures.join("boxplots").join("motion_s4.png").is_file());
    let panel = image::open(figures.join("panels/unseen/motion_s4_0.png")).unwrap();
    // two rows of 24-pixel tiles, five columns: target, input and three methods
    assert_eq!((panel.width(), panel.height()), (5 * 24 + 4 * 2, 2 * 24 + 2));

    let second = tmp.path().join("figures2");
    ok(&["report", s(&eval), "--out", s(&second)]);
    assert_eq!(dir_bytes(&figures), dir_bytes(&second));
}

#[test]
fn maml_and_single_tier_cmaml_write_identical_logs() {
    let tmp = TempDir::new().unwrap();
    let tiers = format!(
        "[curriculum]\ntiers = [[{}]]\nstep_epochs = [1]\nsteps_per_tier = [1]",
        TRAIN_IDS.map(|id| format!("\"{id}\"")).join(", ")
    );
    let config = small_config(tmp.path(), "");
    let text = fs::read_to_string(&config).unwrap() + "\n" + &tiers + "\n";
    fs::write(&config, text).unwrap();
    let runs = tmp.path().join("runs");
    ok(&["simulate", "--config", s(&config)]);
    for method in ["maml", "cmaml"] {
        ok(&[
            "train",
            "--config",
            s(&config),
            "--method",
            method,
            "--quiet",
            "--out",
            s(&runs),
        ]);
    }
    let strip = |run: &str| -> Vec<Value> {
        log_without_times(&runs.join(run))
            .into_iter()
            .map(|mut v| {
                v.as_object_mut().unwrap().remove("method");
                v
            })
            .collect()
    };
    assert_eq!(strip("maml-seed5"), strip("cmaml-seed5"));
}

#[test]
fn evaluate_rejects_mismatched_models() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path(), "method = \"joint\"");
    let runs = tmp.path().join("runs");
    ok(&["simulate", "--config", s(&config)]);
    ok(&["train", "--config", s(&config), "--quiet", "--out", s(&runs)]);

    let wide = tmp.path().join("wide.toml");
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("hidden_channels = 4", "hidden_channels = 6");
    fs::write(&wide, text).unwrap();
    ok(&[
        "train",
        "--config",
        s(&wide),
        "--method",
        "maml",
        "--quiet",
        "--out",
        s(&runs),
    ]);

    let out = cmaml(&[
        "evaluate",
        s(&runs.join("joint-seed5")),
        s(&runs.join("maml-seed5")),
        "--out",
        s(&tmp.path().join("eval")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("differs"));
}

#[test]
fn report_rejects_malformed_scores() {
    let tmp = TempDir::new().unwrap();
    let eval = tmp.path().join("eval");
    fs::create_dir_all(&eval).unwrap();
    fs::write(eval.join("per_image.csv"), "not,a,valid,header\n").unwrap();
    fs::write(eval.join("methods.json"), "[\"input\"]\n").unwrap();
    let out = cmaml(&["report", s(&eval), "--out", s(&tmp.path().join("fig"))]);
    assert_eq!(out.status.code(), Some(2));
}
