//! `photonwire`: batch experiments for PMT optical receivers.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::output::{Format, Meta};

#[derive(Parser)]
#[command(
    name = "photonwire",
    version,
    about = "Batch experiments for PMT optical receivers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for Monte-Carlo runs.
    #[arg(long, global = true, env = "PHOTONWIRE_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Density and atom of a normalized sample.
    GainPdf,
    /// Optimal and background-free duty cycles.
    DutyCycle,
    /// Working-regime thresholds and example waveforms.
    Regimes,
    /// Detector error rates from theory and simulation.
    Ber,
    /// Fit the anode curve to measured mean and spread.
    Fit,
    /// Simulated symbols and PMT output.
    Simulate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GainPdf => "gain-pdf",
            Command::DutyCycle => "duty-cycle",
            Command::Regimes => "regimes",
            Command::Ber => "ber",
            Command::Fit => "fit",
            Command::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numeric,
    Invariant,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(m: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: m.into(),
        }
    }

    pub fn invariant(m: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Invariant,
            message: m.into(),
        }
    }

    pub fn io(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Invariant => 4,
        }
    }
}

impl From<photonwire::Error> for CliError {
    fn from(e: photonwire::Error) -> Self {
        use photonwire::Error as E;
        let kind = match e {
            E::Config(_) | E::Domain(_) | E::Unsupported(_) => ErrorKind::Config,
            E::Numeric(_) | E::Overflow { .. } => ErrorKind::Numeric,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    let mut loaded = config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        loaded.config.seed = s;
    }
    let norm = loaded.config.normalized()?;
    let ctx = Context {
        loaded: &loaded,
        norm,
        meta: Meta {
            command: cli.command.name().into(),
            seed: loaded.config.seed,
            config_hash: loaded.config.hash(),
        },
        out: &cli.out,
        format: cli.format,
    };
    match cli.command {
        Command::GainPdf => commands::gain_pdf(&ctx),
        Command::DutyCycle => commands::duty_cycle(&ctx),
        Command::Regimes => commands::regimes(&ctx),
        Command::Ber => commands::ber(&ctx),
        Command::Fit => commands::fit_curve(&ctx),
        Command::Simulate => commands::simulate(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("photonwire {}: {}", cli.command.name(), e.message);
            ExitCode::from(e.exit_code())
        }
    }
}
