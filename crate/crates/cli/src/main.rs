//! `iada`: dataset synthesis, training, sweeps, theory checks and reports.

mod commands;
mod theory_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iada_core::config::ExperimentConfig;
use iada_core::Error;

/// Exit status for usage, configuration and I/O errors.
const EXIT_USAGE: u8 = 2;
/// Exit status for divergence and other numerical failures.
const EXIT_RUNTIME: u8 = 3;
/// Exit status when a theory check runs but does not pass.
const EXIT_CHECK_FAILED: u8 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "iada",
    version,
    about = "Imbalance-aware domain adaptation experiments"
)]
struct Cli {
    /// TOML overlay applied on top of the preset (or the defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Replaces the data seed and the training seeds with this one value.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Starting configuration: ed4-ed3, ed4-ed2, ed4-ed1 or ed4-ed4.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write source, target and quarantined target-label CSVs plus a manifest.
    Gen,
    /// Train every configured seed and write metrics, summary and checkpoints.
    Train {
        /// Directory written by `gen`; data are synthesized from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Target AUC and balanced-F1 across a coefficient grid.
    Sweep {
        /// lambda_reg or lambda_adv.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 1e-4,1e-3,1e-2,1e-1.
        #[arg(long, default_value = "1e-4,1e-3,1e-2,1e-1")]
        grid: String,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Numerical checks: bound, convergence, gradnorm, complexity or alloc.
    Theory { check: String },
    /// Print the seed aggregates of a finished training run.
    Report {
        /// Directory holding summary.csv; defaults to --out.
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

/// Failures mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
    CheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } | Error::NonFinite { .. } | Error::Autodiff(_) => {
                Failure::Runtime(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_preset_or_default(cli.preset.as_deref())?;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        cfg = ExperimentConfig::parse(&text, cfg)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(seed) = cli.seed_override {
        cfg.domains.seed = seed;
        cfg.train.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> CmdResult {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Gen => commands::gen(&cfg, &cli.out),
        Command::Train { data } => commands::train(&cfg, data.as_deref(), &cli.out),
        Command::Sweep { axis, grid, data } => {
            commands::sweep(&cfg, axis, grid, data.as_deref(), &cli.out)
        }
        Command::Theory { check } => theory_cmd::run(&cfg, check, &cli.out),
        Command::Report { run } => commands::report(run.as_deref().unwrap_or(&cli.out)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
    }
}
