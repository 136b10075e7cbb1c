//! Command-line front end: simulate trials, track them, run Monte Carlo
//! batteries, and merge reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure in at least one trial.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chaintrack::config::ExperimentConfig;
use chaintrack::harness::{self, HarnessError};

#[derive(Parser)]
#[command(
    name = "chaintrack",
    about = "Calibration-free inertial tracking of kinematic chains",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trial (measurements + ground truth) on disk.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the simulation noise seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the filter over a recorded trial and write estimates + metrics.
    Track {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the trial CSVs.
        #[arg(long)]
        trial: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run N independent simulate+track trials and aggregate the metrics.
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        /// Number of seeds (overrides the config).
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Merge aggregate reports from result directories side by side.
    Report {
        /// Result directories written by `montecarlo` or `track`.
        dirs: Vec<PathBuf>,
        /// Optional directory for comparison.txt / comparison.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &std::path::Path, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.sim_noise.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let config = load_config(&config, seed)?;
            harness::cmd_simulate(&config, &out)?;
            println!("trial written to {}", out.display());
            Ok(())
        }
        Command::Track { config, trial, out, seed } => {
            let config = load_config(&config, seed)?;
            let report = harness::cmd_track(&config, &trial, &out)?;
            match report {
                Some(report) => print!("{}", harness::render_trial_report(&report)),
                None => println!("estimates written (no ground truth found, metrics skipped)"),
            }
            println!("outputs in {}", out.display());
            Ok(())
        }
        Command::Montecarlo { config, seeds, out, seed } => {
            let config = load_config(&config, seed)?;
            let outcome = harness::cmd_montecarlo(&config, seeds, Some(&out))?;
            print!("{}", harness::render_aggregate(&outcome));
            println!("outputs in {}", out.display());
            Ok(())
        }
        Command::Report { dirs, out } => {
            let (text, csv) = harness::cmd_report(&dirs)?;
            print!("{text}");
            if let Some(out) = out {
                std::fs::create_dir_all(&out)
                    .map_err(|e| HarnessError::Other(format!("{}: {e}", out.display())))?;
                std::fs::write(out.join("comparison.txt"), &text)
                    .map_err(|e| HarnessError::Other(e.to_string()))?;
                std::fs::write(out.join("comparison.csv"), &csv)
                    .map_err(|e| HarnessError::Other(e.to_string()))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
