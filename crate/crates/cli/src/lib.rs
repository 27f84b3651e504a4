//! Batch front end for the array simulator: config loading, experiments and
//! CSV output. `main.rs` is only argument parsing on top of [`execute`].

pub mod config;
pub mod experiments;
pub mod trace;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hvarray::error::{ConfigError, SolverError};

use config::ExperimentConfig;
use trace::CsvTrace;

#[derive(Debug, Parser)]
#[command(name = "hvarray", version, about = "Characterise a simulated HV 2T1R memristor array")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `section.key=value`, applied after the config file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Reserved for stochastic models; checked but otherwise unused.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Read the target cell and report both resistance estimates.
    Read,
    /// Apply one set or reset pulse.
    Write,
    /// Electroform the target cell with a voltage staircase.
    Form,
    /// Step the programming voltage over the sweep grid.
    IvSweep,
    /// Read and write transients at 10 MOhm and 1 kOhm.
    Fig5,
    /// Readout error of both estimators over a resistance sweep.
    Fig6,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] hvarray::Error),
    #[error("writing output: {0}")]
    Io(#[from] io::Error),
    #[error("writing output: {0}")]
    Csv(#[from] csv::Error),
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NONCONVERGENCE: u8 = 3;
pub const EXIT_FORMING_FAILED: u8 = 4;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use hvarray::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Sim(e) => match e.root() {
                E::Config(_) | E::Controller(_) | E::Capability { .. } | E::Device(_) => EXIT_CONFIG,
                E::Solver(SolverError::NonConvergence { .. }) => EXIT_NONCONVERGENCE,
                _ => EXIT_OTHER,
            },
            CliError::Io(_) | CliError::Csv(_) => EXIT_OTHER,
        }
    }
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<CsvTrace, CliError> {
    let t = match command {
        Command::Read => experiments::run_read(cfg),
        Command::Write => experiments::run_write(cfg),
        Command::Form => experiments::run_form(cfg),
        Command::IvSweep => experiments::run_iv_sweep(cfg),
        Command::Fig5 => experiments::run_fig5(cfg),
        Command::Fig6 => experiments::run_fig6(cfg),
    }?;
    Ok(t)
}

fn forming_failed(t: &CsvTrace) -> bool {
    let k = t.column_index("result");
    k.is_some_and(|k| t.rows.last().is_some_and(|r| r[k] == trace::Field::Text(experiments::FORMING_FAILED.into())))
}

/// Loads the config, runs the experiment and writes the CSV. Returns the
/// process exit code.
pub fn execute(cli: &Cli) -> Result<u8, CliError> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let table = run(cli.command, &cfg)?;
    match &cli.out {
        Some(p) => table.write(File::create(p)?)?,
        None => {
            let mut stdout = io::stdout().lock();
            table.write(&mut stdout)?;
            stdout.flush()?;
        }
    }
    Ok(if forming_failed(&table) { EXIT_FORMING_FAILED } else { EXIT_OK })
}
