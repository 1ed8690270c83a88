//! Batch front end for the coupling/convergence-bound library.
//!
//! One JSON configuration file drives five commands:
//!
//! * `rates` — closed-form rate report (certificates, minorization, the
//!   assembled geometric bounds, competitor comparison) as JSON.
//! * `couple` — Monte Carlo coalescence curve of the reflection coupling
//!   as CSV, with optional validation of the certified bound.
//! * `mixture` — two-well TV-decay experiment: curves as CSV, fitted
//!   rates and closed-form comparison as JSON.
//! * `compare` — competitor inverse-rate grid as CSV.
//! * `verify-drift` — Monte Carlo audit of a drift certificate as JSON.
//!
//! Exit codes: 0 success, 1 a certified inequality was violated, 2
//! configuration error, 3 numeric precondition rejected by the library.
//! Artifacts are byte-identical for a fixed `(config, seed)` pair
//! regardless of `--threads`.

mod cmd;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "emcouple",
    version,
    about = "Reflection couplings and explicit convergence bounds for Euler-Maruyama chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base random seed; overrides the config field (default 0).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Directory artifacts are written to (default: current directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Monte Carlo replica budget; overrides the config fields.
    #[arg(long, global = true, value_name = "N")]
    replicas: Option<u64>,
    /// Worker threads (default: all cores); outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form convergence-rate report for the problem drift.
    Rates,
    /// Reflection-coupled coalescence curve, optional bound validation.
    Couple,
    /// Two-well TV-decay experiment and rate comparison.
    Mixture,
    /// Competitor inverse-rate grid over barrier tuples.
    Compare,
    /// Monte Carlo audit of the one-step drift inequality.
    VerifyDrift,
}

/// Failures with their exit code: configuration/schema/IO problems exit
/// 2, numeric preconditions surfaced by the library exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<emcouple::Error> for CliError {
    fn from(e: emcouple::Error) -> Self {
        use emcouple::Error::*;
        let msg = e.to_string();
        match e {
            InvalidConfig(_) | InsufficientDriftMetadata(_) | EmptySampleSet
            | UnequalSampleCounts(_) => CliError::Config(msg),
            StepsizeCap(_) | ExplosiveProfile(_) | InvalidTaming(_) | BlockLengthTooShort(_)
            | InvalidInterpolation(_) | DegenerateMinorization(_) | NoLinearRegime(_)
            | InsufficientSamples(_) | NonCoerciveV(_) | Inconsistency(_) => {
                CliError::Numeric(msg)
            }
        }
    }
}

/// Flag/config precedence resolved once per run: flags beat the file,
/// section fields beat the top level.
pub struct Resolved {
    pub seed: u64,
    pub out_dir: PathBuf,
    flag_replicas: Option<u64>,
    file_replicas: Option<u64>,
}

impl Resolved {
    /// The replica budget for one command, given its section override.
    pub fn replicas(&self, section: Option<u64>) -> Result<u64, CliError> {
        self.flag_replicas
            .or(section)
            .or(self.file_replicas)
            .ok_or_else(|| {
                CliError::Config(
                    "no replica budget: set --replicas or a replicas field".into(),
                )
            })
    }
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = config::load(path)?;
    let rv = Resolved {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        out_dir: cli.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        flag_replicas: cli.replicas,
        file_replicas: cfg.replicas,
    };
    match cli.command {
        Command::Rates => cmd::rates(&cfg, &rv),
        Command::Couple => cmd::couple(&cfg, &rv),
        Command::Mixture => cmd::mixture(&cfg, &rv),
        Command::Compare => cmd::compare(&cfg, &rv),
        Command::VerifyDrift => cmd::verify_drift(&cfg, &rv),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
