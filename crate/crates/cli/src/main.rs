//! `kdgen` command-line interface.

mod commands;
mod inputs;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use kdgen::config::LossKind;
use kdgen::generation::Backend;

#[derive(Parser, Debug)]
#[command(name = "kdgen", version, about = "Feedback-guided synthetic data generation and distillation")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the generation/distillation loop and write a run directory.
    Distill(DistillArgs),
    /// Run ablation arms over several seeds in the simulated world.
    Simulate(SimulateArgs),
    /// Score predictions against references.
    Evaluate(EvaluateArgs),
    /// Export a log-likelihood histogram of a run's dataset as CSV.
    ExportDist(ExportArgs),
    /// Unique-token ratio of one or more JSONL datasets.
    Diversity(DiversityArgs),
    /// Ask a judge to relabel a dataset and report agreement.
    Audit(AuditArgs),
}

/// Flags that build the effective run configuration. Precedence:
/// config file, then `--set`, then the dedicated flags.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override any config field, e.g. `--set simulation.label_noise=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_enum)]
    backend: Option<BackendArg>,

    /// Base URL of an OpenAI-compatible server (…/v1).
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,

    #[arg(long, value_name = "NAME")]
    model: Option<String>,
}

#[derive(Args, Debug)]
struct DistillArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// Run directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Disable feedback selection (train prompts get no feedback examples).
    #[arg(long)]
    no_feedback: bool,

    #[arg(long, value_enum)]
    loss: Option<LossArg>,

    /// Total training samples to request; a comma list runs one directory
    /// per budget under `--out`.
    #[arg(long, value_delimiter = ',', value_name = "N")]
    budget: Vec<u64>,

    /// Continue from the latest checkpoint in `--out`.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// Arms to run: full, no_feedback, no_sce, vanilla.
    #[arg(long, value_delimiter = ',', default_value = "full,no_feedback,no_sce,vanilla")]
    arms: Vec<String>,

    /// Number of seeds, counting up from `--seed` (default 0).
    #[arg(long, default_value_t = 5)]
    seeds: u64,

    /// Balanced test samples per cluster.
    #[arg(long, default_value_t = 100)]
    per_cluster: usize,

    /// Size of the clean-label test set.
    #[arg(long, default_value_t = 1000)]
    clean_size: usize,

    /// Write results.jsonl and summary.json here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Run arms one after another on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// JSONL of predictions: strings, or objects with a `label` field.
    #[arg(long, value_name = "PATH")]
    preds: PathBuf,

    #[arg(long, value_name = "PATH")]
    refs: PathBuf,

    #[arg(long, value_enum, default_value = "accuracy")]
    metric: MetricArg,

    /// Task preset used to canonicalize labels for accuracy.
    #[arg(long, value_name = "NAME")]
    task: Option<String>,

    /// Print the full report, with per-pair details, as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Run directory written by `distill`.
    #[arg(long, value_name = "DIR")]
    run: PathBuf,

    /// Histogram this JSONL instead of the run's dataset.
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,

    /// `truth` needs a simulated run; `student` uses the final checkpoint.
    #[arg(long, value_enum, default_value = "truth")]
    density: DensityArg,

    #[arg(long, default_value_t = 20)]
    bins: usize,

    /// CSV destination; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiversityArgs {
    /// JSONL sample files.
    #[arg(required = true, value_name = "PATH")]
    datasets: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// JSONL samples to audit.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,

    /// Audit at most this many samples from the start of the file.
    #[arg(long, value_name = "N")]
    limit: Option<usize>,

    /// Write the per-sample records as JSON.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum BackendArg {
    Http,
    Simulated,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Http => Backend::Http,
            BackendArg::Simulated => Backend::Simulated,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum LossArg {
    Sce,
    Ce,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Sce => LossKind::Sce,
            LossArg::Ce => LossKind::Ce,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum MetricArg {
    Accuracy,
    ExactMatch,
    RougeL,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum DensityArg {
    Truth,
    Student,
}

/// A mistake in how the tool was invoked, as opposed to a failure while
/// running. Maps to exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => {
                    if !e.to_string().contains("Usage:") {
                        eprintln!("\n{}", Cli::command().render_usage());
                    }
                    ExitCode::from(1)
                }
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level));
    // the HTTP stack hex-dumps requests, credentials included, at trace level
    for target in ["ureq", "ureq_proto"] {
        logger.filter_module(target, log::LevelFilter::Info);
    }
    logger.init();

    let result = match cli.command {
        Command::Distill(a) => commands::distill(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::ExportDist(a) => commands::export_dist(a),
        Command::Diversity(a) => commands::diversity(a),
        Command::Audit(a) => commands::audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}\n\n{}", Cli::command().render_usage());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
