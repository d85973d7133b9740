use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use phasesweep_cli::experiments::{self, Run};
use phasesweep_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "phasesweep", version, about = "Multi-source phase-sweep transient imaging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WithInput {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a multi-source sweep and write one measurement per source.
    Simulate(Common),
    /// Equalize and interleave a simulated dataset directory.
    Calibrate(WithInput),
    /// Reconstruct a binary measurement file.
    Reconstruct(WithInput),
    /// Tabulate the systematic delay error budget.
    AnalyzeError(Common),
    /// Peak-estimation error versus sampling step.
    StudySampling(Common),
    /// Terraced-target comparison of 1x and multi-source acquisition.
    Quantify(Common),
    /// Mirror scene with virtual wavefronts.
    SceneMirror(Common),
    /// Scattering grape scene.
    SceneScatter(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.display().to_string();
    }
    config.validate()?;
    Ok(config)
}

fn report<R: Serialize>(run: Run<R>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&run.report)?;
    // A closed stdout (for example a pipe into `head`) is not an error.
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(c) => report(experiments::run_simulate(&load(&c)?)?),
        Command::Calibrate(c) => report(experiments::run_calibrate(&load(&c.common)?, &c.input)?),
        Command::Reconstruct(c) => {
            report(experiments::run_reconstruct(&load(&c.common)?, &c.input)?)
        }
        Command::AnalyzeError(c) => report(experiments::run_analyze_error(&load(&c)?)?),
        Command::StudySampling(c) => report(experiments::run_sampling_study(&load(&c)?)?),
        Command::Quantify(c) => report(experiments::run_quantification(&load(&c)?)?),
        Command::SceneMirror(c) => report(experiments::run_mirror_scene(&load(&c)?)?),
        Command::SceneScatter(c) => report(experiments::run_scattering_scene(&load(&c)?)?),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::FAILURE
        }
    }
}
