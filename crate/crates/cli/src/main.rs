use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use valid_core::harness::{
    emit_metrics, parse_value, resolve_parameters, run_experiment, run_sweep, write_sweep, Baseline, RunConfig,
    Setting,
};
use valid_core::validation::Outcome;

/// Validated decentralized learning simulator.
#[derive(Parser)]
#[command(name = "valid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its record.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Accept attack specs that break the connectivity or budget assumptions.
        #[arg(long)]
        allow_assumption_violation: bool,
    },
    /// Run the Cartesian product of values and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dot-separated config field, e.g. `attack.strategy.sigma`.
        #[arg(long)]
        vary: String,
        /// Comma-separated values; each is read as JSON when possible.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Print calibrated parameters as JSON.
    Calibrate {
        what: Calibration,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the coordinate-wise median baseline.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "baseline")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Calibration {
    Bounds,
    Gamma,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, seed, out, allow_assumption_violation } => {
            let mut c = load(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            c.attack.allow_assumption_violation |= allow_assumption_violation;
            single(&c, &out)
        }
        Command::Baseline { config, seed, out } => {
            let mut c = load(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            c.baseline = Baseline::CoordinateMedian;
            single(&c, &out)
        }
        Command::Sweep { config, vary, values, seeds, out } => {
            let c = load(&config)?;
            let values: Vec<_> = values.iter().map(|v| parse_value(v)).collect();
            let cells = run_sweep(&c, &vary, &values, &seeds)?;
            write_sweep(&cells, &out)?;
            let failed = cells.iter().filter(|c| c.record.outcome() == Some(Outcome::Fail)).count();
            eprintln!("{} runs written to {} ({failed} FAIL)", cells.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate { what, config } => {
            let mut c = load(&config)?;
            if let Calibration::Bounds = what {
                // Bounds alone need no discount search.
                c.gamma = Setting::Value(0.0);
            }
            let p = resolve_parameters(&c)?;
            let json = match what {
                Calibration::Bounds => serde_json::json!({ "bounds": p.bounds }),
                Calibration::Gamma => serde_json::json!({
                    "gamma_max": p.gamma_max,
                    "gamma": p.gamma,
                    "contraction_factor": p.contraction_factor,
                    "epsilon": p.epsilon,
                    "delta": p.delta,
                }),
            };
            println!("{}", serde_json::to_string_pretty(&json)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn single(config: &RunConfig, out: &Path) -> Result<ExitCode> {
    let record = run_experiment(config)?;
    emit_metrics(&record, out)?;
    let mse = record.final_mse().map_or("n/a".to_string(), |m| format!("{m:.6}"));
    match record.outcome() {
        Some(o) => eprintln!("outcome {o}, final mse {mse}, {:.2?}", record.wall_clock),
        None => eprintln!("final mse {mse}, {:.2?}", record.wall_clock),
    }
    Ok(if record.outcome() == Some(Outcome::Fail) { ExitCode::from(2) } else { ExitCode::SUCCESS })
}
