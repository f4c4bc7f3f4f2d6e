//! `slipfric`: slip detection and friction estimation from telemetry logs.
//!
//! Exit codes: 0 success (including warned estimates), 1 usage,
//! 2 data or parse error, 3 domain or calibration error.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::CONFIG_ENV;

#[derive(Debug, Parser)]
#[command(
    name = "slipfric",
    version,
    about = "Tire slip detection and friction estimation from telemetry logs"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Default,
    None,
}

/// Flags shared by every subcommand that reads telemetry.
#[derive(Debug, Args)]
pub struct Common {
    /// Gravity [m/s²].
    #[arg(long)]
    pub g: Option<f64>,
    /// Ordering policy for input logs.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Resample inputs onto a common clock at --rate.
    #[arg(long)]
    pub align: bool,
    /// Target clock rate for --align [Hz].
    #[arg(long)]
    pub rate: Option<f64>,
}

/// Where detection thresholds come from. Without any of these, the config
/// file's thresholds are used, else they are calibrated on the inputs.
#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Calibration report to take thresholds from.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["linear", "angular"])]
    pub thresholds: Option<PathBuf>,
    /// Linear threshold [m/s].
    #[arg(long, requires = "angular")]
    pub linear: Option<f64>,
    /// Angular threshold [rad/s].
    #[arg(long, requires = "linear")]
    pub angular: Option<f64>,
    /// Consecutive trips required before a channel reports slip.
    #[arg(long)]
    pub consecutive: Option<usize>,
    /// Moving-average window over residuals (0 disables).
    #[arg(long)]
    pub smoothing_window: Option<usize>,
    /// Merge gap between flagged samples of one event [s].
    #[arg(long)]
    pub refractory: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute detection thresholds from training logs.
    Calibrate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Report path; standard output when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Flag slip per record and extract slip events.
    Detect {
        input: PathBuf,
        #[arg(short, long)]
        out_dir: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate friction per surface and export friction circles.
    Estimate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        out_dir: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a labeled telemetry log from the simulator.
    Simulate {
        /// One of: cruise, drift-turn, hard-launch, two-surface.
        #[arg(long, conflicts_with = "sim_config")]
        scenario: Option<String>,
        /// Full simulator configuration (TOML) instead of a named scenario.
        #[arg(long, value_name = "PATH")]
        sim_config: Option<PathBuf>,
        #[arg(long)]
        mu: Option<f64>,
        /// Friction after the switch in two-surface.
        #[arg(long)]
        second_mu: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sample rate [Hz].
        #[arg(long)]
        rate: Option<f64>,
        /// [s]
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum)]
        noise: Option<NoiseArg>,
        #[arg(long)]
        g: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Cross-validated evaluation over labeled logs.
    Evaluate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Ground-truth friction per surface (TOML).
        #[arg(long, value_name = "PATH")]
        ground_truth: Option<PathBuf>,
        #[arg(short, long)]
        out_dir: PathBuf,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Onset matching window [s].
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        refractory: Option<f64>,
        /// Skip plot emission.
        #[arg(long)]
        no_plots: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(failure::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
