use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use swiptbeam::error::Error;
use swiptbeam_cli::{
    dump_instance, run_and_write, validate_bounds, validation_report_json, ExperimentSpec,
};

/// Beamforming optimization experiments for SWIPT-enabled NOMA downlinks.
#[derive(Parser)]
#[command(name = "swiptbeam", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write CSV artifacts.
    Run {
        /// Experiment spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for details.csv / aggregate.csv / timing.csv.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the seed base.
        #[arg(long)]
        seed_base: Option<u64>,
        /// Conic solver tolerance.
        #[arg(long)]
        solver_tol: Option<f64>,
    },
    /// Verify the surrogate bounds by randomized sampling.
    Validate {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the JSON report here (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Deliberately corrupt a coefficient to prove the harness
        /// detects violations; the command then exits nonzero.
        #[arg(long)]
        negative_control: bool,
    },
    /// Generate one channel instance and dump it as versioned JSON.
    DumpInstance {
        /// Scenario file (TOML).
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output path (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit codes: 0 success, 1 configuration error, 2 solver or validation
/// failure.
fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Error>() {
                Some(
                    Error::InvalidConfig(_)
                    | Error::TomlParse(_)
                    | Error::TomlEncode(_)
                    | Error::Domain(_),
                ) => ExitCode::from(1),
                Some(Error::Io(_)) | Some(Error::Json(_)) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { spec, out, trials, seed_base, solver_tol } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if let Some(t) = trials {
                spec.trials = t;
            }
            if let Some(s) = seed_base {
                spec.seed_base = s;
            }
            if let Some(tol) = solver_tol {
                spec.settings.solver_tol = tol;
            }
            let rows = run_and_write(&spec, &out)?;
            let infeasible = rows.iter().filter(|r| r.status == "infeasible").count();
            eprintln!(
                "{}: {} trials ({} infeasible) -> {}",
                spec.name,
                rows.len(),
                infeasible,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { samples, seed, out, negative_control } => {
            let report = validate_bounds(samples, seed, negative_control);
            let json = validation_report_json(&report);
            match &out {
                Some(path) => std::fs::write(path, &json)?,
                None => println!("{json}"),
            }
            for check in &report.checks {
                eprintln!(
                    "{:<36} samples={} max_violation={:.3e} equality_gap={:.3e}",
                    check.name, check.samples, check.max_violation, check.max_equality_gap
                );
            }
            if report.passed {
                eprintln!("bound validation: PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("bound validation: FAIL");
                Ok(ExitCode::from(2))
            }
        }
        Command::DumpInstance { scenario, seed, out } => {
            let json = dump_instance(&scenario, seed)?;
            match &out {
                Some(path) => std::fs::write(path, &json)?,
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
