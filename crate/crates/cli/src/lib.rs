//! Command-line front end: config parsing, experiment launch, and CSV/SVG
//! export.

pub mod commands;
pub mod config;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "trimsgd",
    about = "Train image classifiers with label-noised, loss-trimmed SGD and reproduce the experiment tables and figures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment from a JSON config
    Train(RunArgs),
    /// Run the optimizer comparison (SGD, RMSprop, Adam, ours)
    Compare(RunArgs),
    /// Grid sweep over noise and trim ratios
    Sweep(RunArgs),
    /// Loss-distribution histogram under original vs noised labels
    Histogram(HistogramArgs),
    /// Render curves from results CSVs to SVG
    Plot(PlotArgs),
}

/// Flags shared by the experiment-running subcommands.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment config
    #[arg(long)]
    pub config: PathBuf,

    /// Directory holding `<dataset>/` IDX files (plain or .gz)
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,

    /// Output directory for CSV/JSON/SVG
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Override a config key, e.g. `--set rho=0.1` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Shorthand for `--set trials=N`
    #[arg(long)]
    pub trials: Option<usize>,

    /// Shorthand for `--set base_seed=S`
    #[arg(long)]
    pub seed: Option<u64>,

    /// Parallel trials; 1 replays exactly, >1 is identical by construction
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Histogram a saved checkpoint instead of training first
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Number of log-spaced bins
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Results CSVs, one curve per file (named by file stem)
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Which per-epoch column to plot
    #[arg(long, default_value = "test_loss")]
    pub column: String,

    /// Logarithmic y axis
    #[arg(long)]
    pub log_y: bool,
}

/// Parses an argument vector (binary name first). Unknown flags surface as
/// clap usage errors naming the offending token.
pub fn parse_cli<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

/// CLI failure modes, mapped to exit codes in `main`.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad invocation or config key; exits with code 2.
    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] trimsgd::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
