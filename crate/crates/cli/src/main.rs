//! `cascade`: budget-constrained cascade deferral for machine translation,
//! as an offline replay harness and a live orchestrator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cascade_gateway::GatewayError;

mod commands;
mod config;
mod manifest;
mod profiles;

#[derive(Debug)]
pub enum CliError {
    /// Validation or usage problem; exits 2.
    Usage(String),
    /// Remote endpoint failure; exits 3.
    Remote(String),
    /// Anything else; exits 1.
    Other(anyhow::Error),
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> CliError {
        match e {
            GatewayError::MissingAuthToken { .. }
            | GatewayError::InvalidConfig { .. }
            | GatewayError::Batch(_)
            | GatewayError::Deferral(_)
            | GatewayError::Cost(_) => CliError::Usage(e.to_string()),
            GatewayError::NoUsableRecords => CliError::Remote(e.to_string()),
            GatewayError::Cache(inner) => CliError::Other(anyhow::anyhow!("cache error: {inner}")),
        }
    }
}

#[derive(Parser)]
#[command(name = "cascade", version, about = "Budget-constrained cascade deferral for machine translation")]
struct Cli {
    /// Config file with cost profiles, endpoints, and live settings
    #[arg(long, global = true, env = "CASCADE_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide which records a budget defers to the large model
    Defer(DeferArgs),
    /// Sweep deferral curves over a budget grid, exporting CSV and JSON
    Curve(CurveArgs),
    /// Report the parity fraction and the QE-reranking cost bridge
    Parity(ParityArgs),
    /// Segment-level win/tie/loss rates between two score columns
    Wtl(WtlArgs),
    /// Paired permutation test between two score columns
    Permtest(PermtestArgs),
    /// Run the cascade against live endpoints
    RunLive(RunLiveArgs),
}

#[derive(Args)]
struct DeferArgs {
    /// Batch JSONL file
    #[arg(long)]
    batch: PathBuf,
    /// Deferral rule: qe, random, shortest, longest, logprobs, oracle
    #[arg(long)]
    rule: String,
    /// Budget fraction in [0, 1]
    #[arg(long)]
    eta: f64,
    /// Seed for the random rule
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Column pair the oracle rule reads: quality or qe
    #[arg(long, default_value = "quality")]
    quality_col: String,
    /// Score column whose raw convention is lower-is-better (repeatable)
    #[arg(long = "lower-better", value_name = "COLUMN")]
    lower_better: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    /// Batch JSONL file
    #[arg(long)]
    batch: PathBuf,
    /// Comma-separated rules, e.g. "qe,random,oracle"
    #[arg(long)]
    rules: String,
    /// Comma-separated budget grid; defaults to 0.0..1.0 in steps of 0.1
    #[arg(long)]
    grid: Option<String>,
    /// Cost-model profile name
    #[arg(long)]
    cost_profile: String,
    /// Column pair realized by deferral: quality or qe
    #[arg(long, default_value = "quality")]
    quality_col: String,
    /// Seed for the random rule
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score column whose raw convention is lower-is-better (repeatable)
    #[arg(long = "lower-better", value_name = "COLUMN")]
    lower_better: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParityArgs {
    /// Cost-model profile name
    #[arg(long)]
    cost_profile: String,
    /// Largest hypothesis count in the printed bridge table
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    /// Optional output directory for parity.json
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WtlArgs {
    /// Batch JSONL file
    #[arg(long)]
    batch: PathBuf,
    /// First score column (the "system under test")
    #[arg(long)]
    a: String,
    /// Second score column (the baseline)
    #[arg(long)]
    b: String,
    /// Differences below this count as ties
    #[arg(long, default_value_t = 0.122)]
    threshold: f64,
    /// Score column whose raw convention is lower-is-better (repeatable)
    #[arg(long = "lower-better", value_name = "COLUMN")]
    lower_better: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PermtestArgs {
    /// Batch JSONL file
    #[arg(long)]
    batch: PathBuf,
    /// First score column
    #[arg(long)]
    a: String,
    /// Second score column
    #[arg(long)]
    b: String,
    /// Significance level
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Monte Carlo iterations above the exact cutover
    #[arg(long, default_value_t = 100_000)]
    iterations: u64,
    /// Monte Carlo seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enumerate exactly when the batch has at most this many records
    #[arg(long, default_value_t = 20)]
    max_exact_n: usize,
    /// Score column whose raw convention is lower-is-better (repeatable)
    #[arg(long = "lower-better", value_name = "COLUMN")]
    lower_better: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunLiveArgs {
    /// Source texts, one per line
    #[arg(long)]
    sources: PathBuf,
    /// Budget fraction in [0, 1]
    #[arg(long)]
    eta: f64,
    /// Override the cost profile named in the [live] config section
    #[arg(long)]
    cost_profile: Option<String>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli.config.clone();
    match &cli.command {
        Command::Defer(args) => commands::cmd_defer(args, config_path),
        Command::Curve(args) => commands::cmd_curve(args, config_path),
        Command::Parity(args) => commands::cmd_parity(args, config_path),
        Command::Wtl(args) => commands::cmd_wtl(args, config_path),
        Command::Permtest(args) => commands::cmd_permtest(args, config_path),
        Command::RunLive(args) => commands::cmd_run_live(args, config_path),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Remote(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
        Err(CliError::Other(error)) => {
            eprintln!("error: {error:#}");
            ExitCode::FAILURE
        }
    }
}
