//! `qkd-sim` — batch driver for the interferometric QKD simulator.
//!
//! `run` executes a Monte Carlo μ-sweep described by a JSON config (plus
//! flag overrides) through the full pipeline and emits a CSV table; `curve`
//! evaluates the closed-form secure-rate curve on a μ grid. Exit codes:
//! 0 on success, 2 on a configuration problem, 1 on a runtime failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qkd_core::distill::LeakModel;
use qkd_sim::config::{CliOverrides, ConfigError, FileConfig, PresetChoice, RunConfig};
use qkd_sim::sweep::{
    rate_curve, run_sweep, write_curve_csv, write_sweep_csv, CurveConfig, SweepError,
};

#[derive(Parser)]
#[command(name = "qkd-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over mean photon numbers through the full pipeline.
    Run(RunArgs),
    /// Closed-form secure-rate curve on a mu grid (no Monte Carlo).
    Curve(CurveArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run description; the flags below override its fields.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Comma-separated mean photon numbers, e.g. `0.1,0.3,0.5`.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    mu: Option<Vec<f64>>,
    /// Link preset: `10km`, `20km`, or `custom`.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Leak model: `bb84`, `tagged-multi`, `tagged-2ph`, `tagged-2ph-hidden`.
    #[arg(long, value_name = "NAME")]
    leak: Option<String>,
    /// Pulse slots simulated per sweep point.
    #[arg(long, value_name = "N")]
    slots: Option<usize>,
    /// Base seed for every random stream in the run.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output CSV path (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    /// Link preset the curve starts from: `10km`, `20km`, or `custom`.
    #[arg(long, value_name = "NAME", default_value = "10km")]
    preset: String,
    /// Detector efficiency override.
    #[arg(long, value_name = "X")]
    eta: Option<f64>,
    /// One-way link transmission override.
    #[arg(long, value_name = "X")]
    t_link: Option<f64>,
    /// Dark-count probability per detector per slot override.
    #[arg(long, value_name = "X")]
    dark: Option<f64>,
    /// Leak model: `bb84`, `tagged-multi`, `tagged-2ph`, `tagged-2ph-hidden`.
    #[arg(long, value_name = "NAME", default_value = "bb84")]
    leak: String,
    /// Smallest mean photon number on the grid.
    #[arg(long, value_name = "X", default_value_t = 0.001)]
    mu_min: f64,
    /// Largest mean photon number on the grid.
    #[arg(long, value_name = "X", default_value_t = 1.2)]
    mu_max: f64,
    /// Grid spacing.
    #[arg(long, value_name = "X", default_value_t = 0.001)]
    mu_step: f64,
    /// Output CSV path (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run_command(args),
        Command::Curve(args) => curve_command(args),
    }
}

fn run_command(args: RunArgs) -> ExitCode {
    let file = match FileConfig::load(&args.config) {
        Ok(file) => file,
        Err(e) => return config_failure(&e),
    };
    let flags = CliOverrides {
        mu: args.mu,
        preset: args.preset,
        leak: args.leak,
        slots: args.slots,
        seed: args.seed,
        out: args.out,
    };
    let cfg = match RunConfig::resolve(file, flags) {
        Ok(cfg) => cfg,
        Err(e) => return config_failure(&e),
    };

    let rows = match run_sweep(&cfg) {
        Ok(rows) => rows,
        Err(e) => return runtime_failure(&e),
    };
    match write_output(cfg.output_path.as_deref(), |out| write_sweep_csv(&rows, out)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => runtime_failure(&e),
    }
}

fn curve_command(args: CurveArgs) -> ExitCode {
    let preset: PresetChoice = match args.preset.parse() {
        Ok(p) => p,
        Err(e) => return config_failure(&e),
    };
    let mut channel = preset.base_params();
    if let Some(v) = args.eta {
        channel.eta = v;
    }
    if let Some(v) = args.t_link {
        channel.t_link = v;
    }
    if let Some(v) = args.dark {
        channel.dark = v;
    }
    let leak_model: LeakModel = match args.leak.parse() {
        Ok(m) => m,
        Err(_) => return config_failure(&ConfigError::UnknownLeakModel(args.leak)),
    };

    for grid_value in [args.mu_min, args.mu_step] {
        if !(grid_value.is_finite() && grid_value > 0.0) {
            return config_failure(&ConfigError::BadMuValue(grid_value));
        }
    }
    if !(args.mu_max.is_finite() && args.mu_max >= args.mu_min) {
        return config_failure(&ConfigError::BadMuValue(args.mu_max));
    }
    channel.mu = args.mu_min;
    if let Err(source) = channel.validate() {
        return config_failure(&ConfigError::Channel { mu: args.mu_min, source });
    }

    let cfg = CurveConfig {
        channel,
        leak_model,
        mu_min: args.mu_min,
        mu_max: args.mu_max,
        mu_step: args.mu_step,
    };
    let points = match rate_curve(&cfg) {
        Ok(points) => points,
        Err(e) => return runtime_failure(&e),
    };
    match write_output(args.out.as_deref(), |out| write_curve_csv(&points, out)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => runtime_failure(&e),
    }
}

fn write_output(
    path: Option<&Path>,
    emit: impl FnOnce(&mut dyn Write) -> Result<(), SweepError>,
) -> Result<(), SweepError> {
    match path {
        Some(p) => {
            let mut out = BufWriter::new(File::create(p)?);
            emit(&mut out)?;
            out.flush()?;
            Ok(())
        }
        None => emit(&mut std::io::stdout().lock()),
    }
}

fn report(error: &dyn std::error::Error) {
    eprintln!("error: {error}");
    let mut source = error.source();
    while let Some(cause) = source {
        eprintln!("  caused by: {cause}");
        source = cause.source();
    }
}

fn config_failure(error: &dyn std::error::Error) -> ExitCode {
    report(error);
    ExitCode::from(2)
}

fn runtime_failure(error: &dyn std::error::Error) -> ExitCode {
    report(error);
    ExitCode::FAILURE
}
