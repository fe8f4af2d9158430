//! `cmaml`: simulate artifact corpora, train joint/MAML/CMAML restoration
//! models, evaluate them and render figures.

mod corpus;
mod evaluate;
mod report;
mod runs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cmaml::config::RunConfig;
use cmaml::trainers::Method;

#[derive(Debug, Parser)]
#[command(
    name = "cmaml",
    version,
    about = "Curriculum meta-learning for multi-artifact MRI restoration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the training pools and evaluation sets.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Corpus directory; defaults to `data.corpus_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one method on a simulated corpus.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Corpus directory; defaults to `data.corpus_dir`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Parent of the run directory.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Device::Cpu)]
        device: Device,
        /// Suppress per-epoch progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Score trained runs and write CSV summaries and tables.
    Evaluate {
        /// Run directories written by `train`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Corpus directory; defaults to the first run's `data.corpus_dir`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render box plots and qualitative panels from an evaluation directory.
    Report {
        eval_dir: PathBuf,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Worker threads; overrides `workers` in the config.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Joint,
    Maml,
    Cmaml,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Joint => Method::Joint,
            MethodArg::Maml => Method::Maml,
            MethodArg::Cmaml => Method::Cmaml,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Device {
    Cpu,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match (&common.config, common.seed) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(seed)) => RunConfig::with_seed(seed),
        (None, None) => {
            return Err(cmaml::Error::Argument("pass --config or --seed".into()).into());
        }
    };
    if let Some(seed) = common.seed {
        config.set_seed(seed);
    }
    Ok(config)
}

fn init_workers(workers: usize) -> Result<()> {
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn corpus_dir(explicit: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    explicit.unwrap_or_else(|| config.data.corpus_dir.clone())
}

fn first_run_config(run: &Path) -> Result<RunConfig> {
    Ok(RunConfig::load(&run.join(runs::CONFIG_FILE))?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, out } => {
            let config = load_config(&common)?;
            init_workers(common.workers.unwrap_or(config.workers))?;
            let out = corpus_dir(out, &config);
            let manifest = corpus::simulate(&config, &out, common.force)?;
            println!("wrote {} files to {}", manifest.entries.len(), out.display());
        }
        Command::Train {
            common,
            method,
            corpus,
            out,
            device,
            quiet,
        } => {
            if device != Device::Cpu {
                bail!(cmaml::Error::Argument("only the cpu device is available".into()));
            }
            let mut config = load_config(&common)?;
            if let Some(m) = method {
                config.train.method = m.into();
            }
            init_workers(common.workers.unwrap_or(config.workers))?;
            let corpus = corpus_dir(corpus, &config);
            let dir = runs::train_run(&config, &corpus, &out, common.force, quiet)?;
            println!("{}", dir.display());
        }
        Command::Evaluate {
            runs,
            corpus,
            out,
            force,
            workers,
        } => {
            let config = first_run_config(&runs[0])?;
            init_workers(workers.unwrap_or(config.workers))?;
            let corpus = corpus_dir(corpus, &config);
            evaluate::evaluate_runs(&runs, &corpus, &out, force)?;
            println!("{}", out.display());
        }
        Command::Report { eval_dir, out, force } => {
            let n = report::report(&eval_dir, &out, force)?;
            println!("wrote {n} figures to {}", out.display());
        }
    }
    Ok(())
}

/// 1 for usage and configuration problems, 2 for data and I/O, 3 for
/// numeric failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cmaml::Error>() {
            return match e {
                cmaml::Error::Argument(_) | cmaml::Error::Config(_) => 1,
                cmaml::Error::Numeric(_) => 3,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<image::ImageError>() || cause.is::<serde_json::Error>()
        {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
