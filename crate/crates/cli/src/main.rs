//! `metlab` — command-line front end for the cocycle laboratory.
//!
//! Every experiment is described by one strict JSON config document and
//! emits three artifacts into its output directory: `report.json` (the
//! machine-readable results), `series.csv` (the plottable series, when the
//! experiment has one), and `manifest.json` (config hash, RNG identifier,
//! and per-output checksums).  Identical configs reproduce identical
//! report/series bytes.
//!
//! Exit codes: `0` success, `1` validation or usage error (no outputs are
//! written), `2` the run finished but its scientific check failed (outputs
//! are written so the failure can be inspected).

mod config;
mod output;
mod run;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use config::ExperimentConfig;
use output::{sha256_hex, RunArtifacts};

/// A run that must not produce outputs, reported on stderr with exit 1.
#[derive(Debug)]
pub enum Failure {
    /// Config, usage, or execution-precondition problem.
    Validation(String),
}

#[derive(Parser)]
#[command(
    name = "metlab",
    version,
    about = "Numerical laboratory for matrix cocycles driven by stationary random processes",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Shared flags for config-driven experiments.
#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CounterexampleArgs {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run the built-in slow-decay construction at this generation
    /// (shorthand for a config with only this parameter).
    #[arg(long, value_name = "K", conflicts_with = "config")]
    generation: Option<u32>,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate the grouped Lyapunov spectrum along one sampled path.
    Spectrum(RunArgs),
    /// Estimate the invariant filtration and its level exponents.
    Filtration(RunArgs),
    /// Check the exponent dichotomy and filtration invariance on one path.
    VerifyMet(RunArgs),
    /// Evaluate a subadditive series and its Kingman limit.
    Subadditive(RunArgs),
    /// Reproduce the built-in slow-but-not-exponential decay trajectory.
    Counterexample(CounterexampleArgs),
    /// Monte Carlo conditional-stability verdicts and classifier sweeps.
    Stability(RunArgs),
    /// Cost index along a path, or its optimum over sampled paths.
    Cost(RunArgs),
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Spectrum(_) => "spectrum",
            Cmd::Filtration(_) => "filtration",
            Cmd::VerifyMet(_) => "verify-met",
            Cmd::Subadditive(_) => "subadditive",
            Cmd::Counterexample(_) => "counterexample",
            Cmd::Stability(_) => "stability",
            Cmd::Cost(_) => "cost",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; real parse errors
            // fall under the validation exit code.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(reason)) => {
            eprintln!("check failed: {reason}");
            ExitCode::from(2)
        }
        Err(Failure::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn read_config(path: &Path) -> Result<(Vec<u8>, String), Failure> {
    let origin = path.display().to_string();
    let bytes = fs::read(path)
        .map_err(|e| Failure::Validation(format!("{origin}: {e}")))?;
    Ok((bytes, origin))
}

/// Loads (or synthesizes) the config document for the invoked subcommand.
fn config_source(cli: &Cli) -> Result<(Vec<u8>, String, Option<PathBuf>), Failure> {
    match &cli.cmd {
        Cmd::Spectrum(a)
        | Cmd::Filtration(a)
        | Cmd::VerifyMet(a)
        | Cmd::Subadditive(a)
        | Cmd::Stability(a)
        | Cmd::Cost(a) => {
            let (bytes, origin) = read_config(&a.config)?;
            Ok((bytes, origin, a.out.clone()))
        }
        Cmd::Counterexample(a) => match (&a.config, a.generation) {
            (Some(path), None) => {
                let (bytes, origin) = read_config(path)?;
                Ok((bytes, origin, a.out.clone()))
            }
            (None, Some(generation)) => {
                // The flag stands in for a minimal config document; the
                // synthesized bytes are canonical so the manifest hash is
                // reproducible.
                let bytes = format!(
                    "{{\"schema_version\":1,\"experiment\":{{\"name\":\"counterexample\",\"generation\":{generation}}}}}"
                )
                .into_bytes();
                Ok((bytes, "<--generation>".to_string(), a.out.clone()))
            }
            (None, None) => Err(Failure::Validation(
                "counterexample needs --config or --generation".into(),
            )),
            (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
        },
    }
}

fn dispatch(cli: &Cli) -> Result<Option<String>, Failure> {
    let started = Instant::now();
    let (config_bytes, origin, out_flag) = config_source(cli)?;
    let config = ExperimentConfig::parse(&config_bytes, &origin)?;
    let invoked = cli.cmd.name();
    let declared = config.experiment.subcommand();
    if invoked != declared {
        return Err(Failure::Validation(format!(
            "{origin}: config describes a `{declared}` experiment but `{invoked}` was invoked"
        )));
    }

    let outcome = run::execute(&config)?;

    let dir = out_flag
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let artifacts = RunArtifacts {
        subcommand: invoked.to_string(),
        config_sha256: sha256_hex(&config_bytes),
        results: outcome.results,
        series: outcome.series,
        logical_steps: outcome.logical_steps,
        wall_clock_ms: started.elapsed().as_millis() as u64,
    };
    artifacts
        .write(&dir, config.output.series)
        .map_err(|e| Failure::Validation(format!("writing outputs to {}: {e}", dir.display())))?;
    Ok(outcome.check_failed)
}
