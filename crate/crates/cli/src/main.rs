mod commands;
mod manifest;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use flockring::optimizer::Algorithm;

/// Exit codes: 0 success, 2 bad input, 3 divergence, 4 invalid plan.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn output(err: impl std::fmt::Display) -> Self {
        Self {
            code: 1,
            message: err.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "flockring",
    version,
    about = "Circular flocking formations: simulate, tune, plan, export"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory, metrics, events and violations.
    Simulate(SimulateArgs),
    /// Tune controller parameters with GA, PSO or GWO.
    Optimize(OptimizeArgs),
    /// Check a multi-circle layout and print its geometry.
    Plan(PlanArgs),
    /// Turn a run directory into plot-ready series.
    ExportPlots(ExportArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario TOML file, or the name of a bundled scenario.
    #[arg(long)]
    pub config: String,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AlgorithmArg {
    Ga,
    Pso,
    Gwo,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Ga => Algorithm::Ga,
            AlgorithmArg::Pso => Algorithm::Pso,
            AlgorithmArg::Gwo => Algorithm::Gwo,
        }
    }
}

#[derive(Args)]
pub struct OptimizeArgs {
    /// Base scenario; single-circle mode only.
    #[arg(long, default_value = "optimize_base")]
    pub config: String,
    #[arg(long, value_enum)]
    pub algorithm: AlgorithmArg,
    /// Which parameters are free: 1 all eleven, 2 sigmoid bounds fixed,
    /// 3 smoothing fixed, 4 gains only.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub scenario: u8,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub population: usize,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    /// Override the agent count of the base scenario.
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PlanArgs {
    /// Take the plan from a multi-circle scenario instead of the flags below.
    #[arg(long, conflicts_with_all = ["counts", "d_l1", "d_eps", "kappa"])]
    pub config: Option<String>,
    /// Agents per circle, innermost first.
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    pub counts: Vec<usize>,
    /// Innermost radius.
    #[arg(long, default_value_t = 5.0)]
    pub d_l1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub d_eps: f64,
    #[arg(long, default_value_t = 1.2)]
    pub kappa: f64,
}

#[derive(Args)]
pub struct ExportArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    pub run: PathBuf,
    /// Defaults to `<run>/plots`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn threads_from_env() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("FLOCKRING_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::input(format!(
            "FLOCKRING_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(Failure::output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|_| match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Optimize(args) => commands::optimize(&args),
        Command::Plan(args) => commands::plan(&args),
        Command::ExportPlots(args) => plots::export(&args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
