//! `mams`: design, amend and simulate multi-arm multi-stage trials.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::Run;
use config::{Invalid, RunConfig};

#[derive(Parser)]
#[command(name = "mams", version, about = "Multi-arm multi-stage trial design, amendment and simulation")]
struct Cli {
    /// TOML run configuration. Without one the built-in template is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed. Drawn from entropy and recorded in the manifest if omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo replicates, overriding the config.
    #[arg(long, global = true)]
    nsim: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Table or figure id for `reproduce`.
    #[arg(long, global = true)]
    table: Option<String>,
    /// Write files only; print nothing to stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Calibrate a closed-test design and save it.
    Design,
    /// Add arms to a saved design at an interim analysis.
    Amend,
    /// Operating characteristics of a saved design.
    Simulate,
    /// FWER of the unadjusted two-arm addition over a grid of tau.
    SweepFwer,
    /// Conditional rejection of the intersection against the interim Z.
    CondPower,
    /// Regenerate one of the reference tables or figures.
    Reproduce,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Amend => "amend",
            Command::Simulate => "simulate",
            Command::SweepFwer => "sweep-fwer",
            Command::CondPower => "cond-power",
            Command::Reproduce => "reproduce",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::template(),
    };
    let (seed, from_entropy) = match cli.seed.or(config.seed) {
        Some(s) => (s, false),
        None => (rand::random(), true),
    };
    commands::ensure_out(&cli.out)?;
    let run = Run::new(cli.command.name(), config, seed, from_entropy, cli.nsim, cli.table, cli.out, cli.quiet);
    log::info!("{} with seed {seed}", run.command);
    match cli.command {
        Command::Design => commands::design(&run),
        Command::Amend => commands::amend(&run),
        Command::Simulate => commands::simulate(&run),
        Command::SweepFwer => commands::sweep_fwer(&run),
        Command::CondPower => commands::cond_power(&run),
        Command::Reproduce => commands::reproduce_table(&run),
    }
}

/// 2 for invalid input, 3 for calibration failures, 4 when the trial has
/// already stopped, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    use mams_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Domain(_) | E::Dimension { .. } | E::Plan(_) | E::RatioInconsistent { .. } | E::Document(_) => 2,
                E::Calibration { .. } | E::NoiseFloor { .. } => 3,
                E::TrialStopped(_) => 4,
                E::Io(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
