//! `imba-ids`: dataset statistics, training, evaluation, strategy comparison,
//! gradient checks and synthetic data.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

mod commands;
mod config;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Overrides;

/// Errors sorted by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Runtime(err) => write!(f, "{err:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        match err.downcast_ref::<imba_ids::Error>() {
            Some(imba_ids::Error::Config { .. }) => CliError::Usage(format!("{err:#}")),
            _ => CliError::Runtime(err),
        }
    }
}

impl From<imba_ids::Error> for CliError {
    fn from(err: imba_ids::Error) -> Self {
        anyhow::Error::from(err).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.into())
    }
}

#[derive(Parser)]
#[command(
    name = "imba-ids",
    version,
    about = "Imbalance-aware MLP intrusion detection experiments"
)]
struct Cli {
    /// Log progress (per-epoch loss, warnings) to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Class distribution and imbalance measure of a dataset.
    Stats {
        #[arg(long, required_unless_present = "counts")]
        dataset: Option<PathBuf>,
        #[arg(long, requires = "dataset")]
        schema: Option<PathBuf>,
        /// CSV of `class,count` rows instead of a dataset.
        #[arg(long, conflicts_with_all = ["dataset", "schema"])]
        counts: Option<PathBuf>,
    },
    /// Train a model and write a run directory.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// Parent directory for run directories.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Evaluate a trained run on a CSV file.
    Evaluate {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Also write the report as JSON lines (`-` for stdout).
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Train each strategy on the same split and compare them.
    Compare {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated: ce, attack_sharing (as), weighted_ce (wce), ce+oversample (over), ce+undersample (under).
        #[arg(
            long,
            default_value = "ce,attack_sharing,weighted_ce,ce+oversample,ce+undersample"
        )]
        strategies: String,
        /// Write one JSON line per strategy (`-` for stdout instead of the table).
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Compare backpropagation with finite differences on random small networks.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random networks per loss kind.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, hide = true)]
        fault: Option<Fault>,
    },
    /// Write a synthetic Gaussian-cluster dataset and its schema.
    Synth {
        /// Synth spec file.
        #[arg(long, required_unless_present = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, conflicts_with = "spec")]
        preset: Option<Preset>,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Schema path; defaults to the CSV path with a `.schema.toml` extension.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Fault {
    /// Negate the ReLU derivative in the backward pass.
    ReluSignFlip,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Five classes, 9000/400/300/200/100 rows, 20 features.
    LongTail,
    /// Three well-separated classes, 600/200/100 rows, 4 features.
    Separable,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("IMBA_IDS_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        CliError::Usage(format!(
            "IMBA_IDS_THREADS must be a non-negative integer, got `{value}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.into()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Stats {
            dataset,
            schema,
            counts,
        } => commands::stats(dataset, schema, counts),
        Command::Train { overrides, out } => commands::train(&overrides, &out),
        Command::Evaluate {
            run,
            dataset,
            jsonl,
        } => commands::evaluate(&run, &dataset, jsonl.as_deref()),
        Command::Compare {
            overrides,
            strategies,
            jsonl,
        } => commands::compare(&overrides, &strategies, jsonl.as_deref()),
        Command::Gradcheck {
            seed,
            instances,
            fault,
        } => commands::gradcheck(seed, instances, fault),
        Command::Synth {
            spec,
            preset,
            seed,
            out,
            schema_out,
        } => commands::synth(spec, preset, seed, &out, schema_out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
