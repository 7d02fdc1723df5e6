//! `dimee` command-line entry point.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 data error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dimee", version, about = "Trace-driven mobile/edge/cloud early-exit inference engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scenario as train/validation/test trace sets
    Gen(GenArgs),
    /// Pick the confidence threshold maximizing the mean reward
    Calibrate(CalibrateArgs),
    /// Build easy/moderate/hard pools at a threshold
    Pool(PoolArgs),
    /// Stream traces through routing policies and report accuracy and cost
    Simulate(SimulateArgs),
    /// Vary one cost field and record the recalibrated trajectory
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Scenario config JSON; the built-in preset is used when omitted
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario when no config file is given
    #[arg(long, value_parser = ["default", "drift"], default_value = "default")]
    pub preset: String,
    /// Overrides the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct DeployArgs {
    /// Last mobile layer
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    /// Last edge layer
    #[arg(long, default_value_t = 6)]
    pub n: usize,
}

#[derive(Args, Debug, Clone)]
pub struct CostArgs {
    /// Cost config JSON; the benchmark cost profile is used when omitted
    #[arg(long, conflicts_with = "lambda")]
    pub costs: Option<PathBuf>,
    /// Use the standard cost ratios at this edge per-layer unit (cloud charge = unit)
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ThresholdArgs {
    /// Operating threshold
    #[arg(long, conflicts_with = "calibration")]
    pub alpha: Option<f64>,
    /// Calibration report JSON whose alpha_star is used
    #[arg(long)]
    pub calibration: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Calibration trace set (directory or manifest path)
    #[arg(long)]
    pub traces: PathBuf,
    #[command(flatten)]
    pub costs: CostArgs,
    #[command(flatten)]
    pub deploy: DeployArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PoolArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[command(flatten)]
    pub deploy: DeployArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Test stream
    #[arg(long)]
    pub traces: PathBuf,
    /// Pool file; alternatively pass --calib-traces to build pools on the fly
    #[arg(long)]
    pub pools: Option<PathBuf>,
    /// Calibration split used to pick the threshold and build pools when
    /// they are not given
    #[arg(long)]
    pub calib_traces: Option<PathBuf>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[command(flatten)]
    pub costs: CostArgs,
    #[command(flatten)]
    pub deploy: DeployArgs,
    /// Comma-separated policies, or "all"
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<String>>,
    /// Run only the pool-routing policy in this mode
    #[arg(long, value_parser = ["fixed", "adaptive"], conflicts_with = "policies")]
    pub mode: Option<String>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_parser = ["sq_euclidean", "euclidean", "cosine"], default_value = "sq_euclidean")]
    pub distance: String,
    #[arg(long, value_parser = ["cloud", "mobile-full"], default_value = "cloud")]
    pub normalize_against: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Test stream
    #[arg(long)]
    pub traces: PathBuf,
    /// Calibration split, recalibrated at every sweep point
    #[arg(long)]
    pub calib_traces: PathBuf,
    #[command(flatten)]
    pub costs: CostArgs,
    #[command(flatten)]
    pub deploy: DeployArgs,
    /// Cost field to vary: lambda_m, lambda_e, o_e, o_c or gamma
    #[arg(long)]
    pub dimension: String,
    /// Comma-separated values for the field
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, value_parser = ["sq_euclidean", "euclidean", "cosine"], default_value = "sq_euclidean")]
    pub distance: String,
    #[arg(long, value_parser = ["cloud", "mobile-full"], default_value = "cloud")]
    pub normalize_against: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Pool(a) => commands::pool(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
