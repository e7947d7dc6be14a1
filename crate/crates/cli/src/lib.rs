//! Command-line front end: configuration loading, scan orchestration and CSV
//! output for the analytic, BdG and truncated-Wigner engines of `fbdg-core`.
//!
//! Every run writes its tables plus `<command>.manifest.toml` into the output
//! directory. Scan points run on a worker pool and are written in scan order,
//! so the worker count never changes the output bytes.

pub mod commands;
pub mod config;
mod error;
pub mod manifest;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, Result};

use config::Config;
use manifest::{unix_now, RunManifest};
use output::Outputs;

#[derive(Debug, Parser)]
#[command(
    name = "fbdg",
    version,
    about = "Parametric instabilities of bosons in shaken 2D lattices"
)]
pub struct Cli {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,

    /// Master seed; overrides `[run] seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    /// Built-in parameter preset applied before `--config`.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form instability rates, cusp frequency and critical amplitude.
    Rates,
    /// Critical amplitude K0c over a frequency scan.
    K0c,
    /// Fastest-growing Bogoliubov mode from direct integration.
    Bdg,
    /// Truncated-Wigner ensembles with short- and long-time growth rates.
    Twa,
    /// Post-stop excitation against the end phase of an abrupt stop.
    Endphase,
    /// Fit a decay or growth trace from a CSV file.
    Fit {
        /// CSV file with a header row and time and value columns.
        input: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rates => "rates",
            Command::K0c => "k0c",
            Command::Bdg => "bdg",
            Command::Twa => "twa",
            Command::Endphase => "endphase",
            Command::Fit { .. } => "fit",
        }
    }
}

/// Runs one command and returns the manifest that was written.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    let started = unix_now();
    let loaded = config::load(cli.preset.as_deref(), cli.config.as_deref())?;
    let cfg = Config::resolve(loaded, cli.seed)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::config("--workers must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))?;
    let mut out = Outputs::new(&cli.out)?;
    pool.install(|| dispatch(&cli.command, &cfg, &mut out))?;

    let mut manifest = RunManifest::new(
        cli.command.name(),
        &cfg.canonical,
        cfg.seed,
        pool.current_num_threads(),
        started,
    );
    manifest.outputs = out.records.clone();
    manifest.finished_unix_s = unix_now();
    let text = manifest.to_toml()?;
    out.write_bytes(
        &format!("{}.manifest.toml", cli.command.name()),
        text.as_bytes(),
        0,
    )?;
    Ok(manifest)
}

fn dispatch(command: &Command, cfg: &Config, out: &mut Outputs) -> Result<()> {
    match command {
        Command::Rates => commands::rates::run(cfg, out),
        Command::K0c => commands::k0c::run(cfg, out),
        Command::Bdg => commands::bdg::run(cfg, out),
        Command::Twa => commands::twa::run(cfg, out),
        Command::Endphase => commands::endphase::run(cfg, out),
        Command::Fit { input } => commands::fit::run(cfg, input, out),
    }
}
