//! Command-line front end: `simulate`, `verify` and `reach`.
//!
//! Exit codes: 0 on success, 1 when a run or check fails, 2 on a bad
//! configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mm_asif::harness::{
    export_csv, export_plot, run_simulation, tube_to_csv, verify_platoon, ControllerMode,
    SimulationConfig, VerifySettings,
};
use mm_asif::intervals::IntervalVector;
use mm_asif::platoon::build_platoon;
use mm_asif::reachability::forward_overapprox;
use mm_asif::Error;

#[derive(Parser)]
#[command(
    name = "mmasif",
    version,
    about = "Runtime assurance filter for disturbed platoons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop simulation and write the trajectory as CSV.
    Simulate {
        config: PathBuf,
        /// desired-only | vanilla-cbf | asif | backup-only
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV output; defaults to `output_path` from the config, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write an SVG plot.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Check the decomposition function, backup invariance and the backward
    /// reach condition; prints a JSON report.
    Verify {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Print the forward over-approximation tube from `x0` as CSV.
    Reach {
        config: PathBuf,
        #[arg(long)]
        horizon: f64,
    },
}

enum Failure {
    Check(String),
    Config(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Check(other.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<SimulationConfig, Failure> {
    SimulationConfig::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            config,
            mode,
            seed,
            out,
            plot,
        } => {
            let mut cfg = load(&config)?;
            if let Some(m) = mode {
                cfg.controller_mode = m
                    .parse::<ControllerMode>()
                    .map_err(|e| Failure::Config(e.to_string()))?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let record = run_simulation(&cfg)?;
            match out.or(cfg.output_path.clone()) {
                Some(path) => export_csv(&record, path)?,
                None => print!("{}", mm_asif::harness::record_to_csv(&record)?),
            }
            if let Some(path) = plot {
                export_plot(&record, path)?;
            }
            eprintln!(
                "mode={} rows={} min_h={:.6} max_abs_z={:.6} unsafe={} blowup={}",
                cfg.controller_mode,
                record.len(),
                record.min_h(),
                record.max_abs_displacement(),
                record.unsafe_entered,
                record.blowup
            );
            if record.unsafe_entered || record.blowup {
                return Err(Failure::Check(
                    "trajectory entered the unsafe set or diverged".into(),
                ));
            }
            Ok(())
        }
        Command::Verify { config, samples } => {
            let cfg = load(&config)?;
            let model = build_platoon(&cfg.platoon)?;
            let settings = VerifySettings {
                decomposition_samples: samples,
                invariance_samples: samples,
                falsification_samples: samples,
                dt: cfg.dt_embed,
                seed: cfg.seed,
                ..VerifySettings::default()
            };
            let summary = verify_platoon(&model, settings)?;
            let json = serde_json::to_string_pretty(&summary)
                .map_err(|e| Failure::Check(e.to_string()))?;
            println!("{json}");
            if summary.passed {
                Ok(())
            } else {
                Err(Failure::Check("verification failed".into()))
            }
        }
        Command::Reach { config, horizon } => {
            let cfg = load(&config)?;
            if !(horizon >= 0.0) || !horizon.is_finite() {
                return Err(Failure::Config(format!(
                    "horizon must be >= 0, got {horizon}"
                )));
            }
            let model = build_platoon(&cfg.platoon)?;
            let tube = forward_overapprox(
                &model.embedding(),
                &IntervalVector::point(&cfg.initial_state()),
                horizon,
                cfg.dt_embed,
            )?;
            print!("{}", tube_to_csv(&tube));
            if tube.all_valid() {
                Ok(())
            } else {
                Err(Failure::Check(
                    "tube lost validity before the horizon".into(),
                ))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
