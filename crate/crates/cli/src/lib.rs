//! Command-line driver: experiment documents in, CSV tables and manifests
//! out.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

pub use commands::{execute, Report};
pub use config::{CommandKind, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::CheckFailed(_) => EXIT_CHECK,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mhscale",
    version,
    about = "Random-walk Metropolis scaling experiments on lattice Gibbs fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run chains at one step size; write a trajectory and summary.
    Sample(CommonArgs),
    /// Acceptance and jump distance over `run.tau_grid`.
    SweepTau(CommonArgs),
    /// Acceptance at `run.tau` over the window sizes in `run.n_list`.
    SweepN(CommonArgs),
    /// Ergodic estimate of s^2, with the exact value for Gaussian models.
    EstimateS(CommonArgs),
    /// Empirical against limiting Dirichlet form of `run.cylinder`.
    DirichletCheck(CommonArgs),
    /// Law of the proposed energy change against its Gaussian limit.
    CltCheck(CommonArgs),
    /// Oracle against main-path battery.
    OracleCheck(CommonArgs),
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    /// Experiment document (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed_override: Option<u64>,
    /// Worker threads for replica and grid parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    fn parts(&self) -> (CommandKind, &CommonArgs) {
        match self {
            Command::Sample(a) => (CommandKind::Sample, a),
            Command::SweepTau(a) => (CommandKind::SweepTau, a),
            Command::SweepN(a) => (CommandKind::SweepN, a),
            Command::EstimateS(a) => (CommandKind::EstimateS, a),
            Command::DirichletCheck(a) => (CommandKind::DirichletCheck, a),
            Command::CltCheck(a) => (CommandKind::CltCheck, a),
            Command::OracleCheck(a) => (CommandKind::OracleCheck, a),
        }
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<Report, CliError> {
    let (kind, args) = cli.command.parts();
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed_override {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        // Only the first call can size the global pool; later calls in the
        // same process keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let out_dir = config.output_dir.clone();
    let report = execute(kind, &config, &out_dir)?;
    match &report.failure {
        Some(msg) => Err(CliError::CheckFailed(msg.clone())),
        None => Ok(report),
    }
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("mhscale: {e}");
            e.exit_code()
        }
    }
}
