//! `orsm`: ingest corpora, train RSM/ORSM topic models and evaluate them.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure during training or estimation.

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{RunConfig, UsageError};

/// Environment variable holding the default worker-thread count.
const WORKERS_ENV: &str = "ORSM_WORKERS";

#[derive(Parser)]
#[command(name = "orsm", version, about = "Replicated and Over-Replicated Softmax topic models")]
struct Cli {
    /// Worker threads (default: $ORSM_WORKERS, else all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Config file of `section.key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set model.seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, truncate and split a UCI bag-of-words corpus.
    Ingest(RunArgs),
    /// Train a Replicated Softmax model with CD.
    TrainRsm(RunArgs),
    /// Scaled CD pretraining for an Over-Replicated Softmax model.
    Pretrain(RunArgs),
    /// Joint SAP training starting from `paths.init_model`.
    TrainDbm(RunArgs),
    /// Held-out perplexity with AIS partition functions.
    Perplexity(RunArgs),
    /// Write per-document topic features.
    Features(RunArgs),
    /// Cosine retrieval of held-out queries against the training split.
    Retrieve(RunArgs),
    /// Linear classification on topic features.
    Classify(RunArgs),
    /// Print the header of a saved model.
    Info { model: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::TrainRsm(_) => "train-rsm",
            Command::Pretrain(_) => "pretrain",
            Command::TrainDbm(_) => "train-dbm",
            Command::Perplexity(_) => "perplexity",
            Command::Features(_) => "features",
            Command::Retrieve(_) => "retrieve",
            Command::Classify(_) => "classify",
            Command::Info { .. } => "info",
        }
    }
}

fn worker_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| UsageError(format!("{WORKERS_ENV}={v:?} is not a thread count")).into()),
        Err(_) => Ok(None),
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let text = match &args.config {
        Some(p) => Some(
            fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))
                .map_err(|e| UsageError(format!("{e:#}")))?,
        ),
        None => None,
    };
    RunConfig::new(text.as_deref(), &args.overrides)
}

fn write_manifest(cfg: &RunConfig, command: &str, workers: usize, seconds: f64) -> Result<()> {
    let dir = cfg.path("paths.output_dir")?;
    fs::create_dir_all(&dir)?;
    let body = format!(
        "run.command = {command}\nrun.version = {}\nrun.seed = {}\nrun.workers = {workers}\nrun.wall_seconds = {seconds:.3}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.get("model.seed").unwrap_or(""),
        cfg.snapshot()
    );
    fs::write(dir.join(format!("{command}.manifest")), body)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = worker_count(cli.workers)? {
        if n == 0 {
            return Err(UsageError("worker count must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let name = cli.command.name();
    let args = match &cli.command {
        Command::Info { model } => {
            print!("{}", commands::info(model)?);
            return Ok(());
        }
        Command::Ingest(a)
        | Command::TrainRsm(a)
        | Command::Pretrain(a)
        | Command::TrainDbm(a)
        | Command::Perplexity(a)
        | Command::Features(a)
        | Command::Retrieve(a)
        | Command::Classify(a) => a.clone(),
    };
    let cfg = load_config(&args)?;
    cfg.seed()?;
    let start = Instant::now();
    let out = match cli.command {
        Command::Ingest(_) => commands::ingest(&cfg),
        Command::TrainRsm(_) => commands::train_rsm(&cfg),
        Command::Pretrain(_) => commands::pretrain(&cfg),
        Command::TrainDbm(_) => commands::train_dbm(&cfg),
        Command::Perplexity(_) => commands::perplexity(&cfg),
        Command::Features(_) => commands::features(&cfg),
        Command::Retrieve(_) => commands::retrieve(&cfg),
        Command::Classify(_) => commands::classify(&cfg),
        Command::Info { .. } => unreachable!(),
    }?;
    write_manifest(&cfg, name, rayon::current_num_threads(), start.elapsed().as_secs_f64())?;
    print!("{out}");
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(orsm_core::Error::Numeric { .. }) = cause.downcast_ref::<orsm_core::Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
