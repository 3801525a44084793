//! `stackedcp`: simulations, sweeps and checks for the stacked contact process.
//!
//! Exit codes: 0 ok, 1 config error, 2 runtime error, 3 failed check.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    /// A check ran to completion and did not pass.
    Check(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<stackedcp::Error> for CliError {
    fn from(e: stackedcp::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "stackedcp", version, about = "Stacked contact process simulator and analysis toolkit")]
pub struct Cli {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Existing output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the configured experiment and write series plus a manifest.
    Simulate,
    /// Run the configured parameter grid and write sweep.csv.
    Sweep,
    /// Mean-field classification, basin scan and trajectory.
    Meanfield(MeanfieldArgs),
    /// Print the mean-field classification.
    Classify(ParamArgs),
    /// Compare an engine with the exact distribution on a tiny lattice.
    OracleCheck(OracleArgs),
    /// Check the box-geometry inequalities on random configurations.
    GeometryCheck(GeometryArgs),
    /// Bracket the critical birth rate of the single-type process.
    EstimateLambdaC(LambdaCArgs),
    /// Fit the speed of the right edge of a one-dimensional run.
    EdgeSpeed(EdgeSpeedArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ParamArgs {
    /// Rates as `lambda10=..,lambda20=..,lambda21=..,delta=..`; missing
    /// keys fall back to the config.
    #[arg(long)]
    pub params: Option<String>,
}

#[derive(Args, Debug)]
pub struct MeanfieldArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Include the classification (always on when nothing else is asked).
    #[arg(long)]
    pub classify: bool,
    /// Basin scan on an n x n grid of the open simplex.
    #[arg(long)]
    pub scan: Option<usize>,
    /// Horizon of the scan and of the trajectory.
    #[arg(long, default_value_t = 1e4)]
    pub t_end: f64,
    /// Start of a trajectory written to trajectory.csv under --out.
    #[arg(long, num_args = 2, value_names = ["U1", "U2"])]
    pub from: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EngineChoice {
    Gillespie,
    Harris,
    Both,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Initial configuration as a one-dimensional digit string.
    #[arg(long, default_value = "120")]
    pub start: String,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
    #[arg(long, value_enum, default_value_t = EngineChoice::Both)]
    pub engine: EngineChoice,
    #[arg(long, default_value_t = 0.01)]
    pub max_tv: f64,
    #[arg(long, default_value_t = 4.0)]
    pub max_z: f64,
}

#[derive(Args, Debug)]
pub struct GeometryArgs {
    /// Box scale.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    /// Torus side; defaults to 4n.
    #[arg(long)]
    pub side: Option<usize>,
}

#[derive(Args, Debug)]
pub struct LambdaCArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub side: usize,
    #[arg(long, default_value_t = 200)]
    pub replicas: usize,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [1.0, 6.0])]
    pub bracket: Vec<f64>,
    #[arg(long, default_value_t = 0.2)]
    pub tol: f64,
    /// Survival horizon; defaults to 0.4 side.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EdgeSpeedArgs {
    /// Birth rate of the single-type run.
    #[arg(long, default_value_t = 6.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 4000)]
    pub side: usize,
    #[arg(long, num_args = 2, value_names = ["FROM", "TO"], default_values_t = [100.0, 500.0])]
    pub window: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("config error: --workers must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("runtime error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
