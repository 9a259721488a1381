//! `specreg` command-line front end.
//!
//! ```text
//! specreg train   --config run.conf --seed 7 --out results/
//! specreg predict --config run.conf --model results/model.json --out results/
//! specreg cv      --config run.conf
//! specreg path    --config run.conf --jobs 4
//! specreg bench   --config run.conf
//! ```
//!
//! Reports are JSON files in `--out` (also printed to stdout). Failures
//! print `{"error": {...}}` to stderr and exit non-zero.

mod algo;
mod commands;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "specreg", version, about = "Spectral-regularization kernel learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file (flat `key = value`).
    #[arg(long)]
    config: PathBuf,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for grid cells (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for models and reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model and save it.
    Train(Common),
    /// Score `data.test` with a saved model.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Cross-validate over the `grid.*` values.
    Cv(Common),
    /// Validation error along a regularization path or (lambda, m) surface.
    Path(Common),
    /// Time incremental against naive (lambda, m) surface computation.
    Bench(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Train(c) | Command::Cv(c) | Command::Path(c) | Command::Bench(c) => c,
            Command::Predict { common, .. } => common,
        }
    }
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    let common = cli.command.common();
    let config = Config::load(&common.config)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let (seed, out) = (common.seed, common.out.as_path());
    log::info!("running {:?} with seed {seed}", cli.command);
    pool.install(|| match &cli.command {
        Command::Train(_) => commands::cmd_train(&config, seed, out),
        Command::Predict { model, .. } => commands::cmd_predict(&config, seed, model, out),
        Command::Cv(_) => commands::cmd_cv(&config, seed, out),
        Command::Path(_) => commands::cmd_path(&config, seed, out),
        Command::Bench(_) => commands::cmd_bench(&config, seed, out),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", e.render());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
