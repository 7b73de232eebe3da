//! `ohtlab`: simulate homodyne records, reconstruct states, report photon
//! statistics and validate artifacts.

mod artifacts;
mod commands;
mod config;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ohtlab::OhtError;

use crate::commands::Ctx;
use crate::config::{ConfigError, Format, Method, PipelineConfig};

#[derive(Parser)]
#[command(name = "ohtlab", version, about = "Optical homodyne tomography laboratory")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides outputs.dir (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict data artifacts to one format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a single-mode quadrature record.
    Simulate,
    /// Reconstruct a record by filtered back-projection and/or pattern functions.
    Reconstruct {
        dataset: PathBuf,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Highest photon number of the pattern reconstruction.
        #[arg(long)]
        n_max: Option<usize>,
        /// Bootstrap resamples for Wigner error bars.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Photon-number moments and g² from a phase-averaged record.
    Moments { dataset: PathBuf },
    /// Two-time g² by the three-α dual-LO method.
    Twomode,
    /// Array detection: frames, optimal mode, spectral K records.
    Array,
    /// Time-domain gated sampling, band-limited recovery and maps.
    Sample,
    /// Detector gain and electronic-noise calibration.
    Calibrate,
    /// Check an artifact: schema, checksum, statistical sanity.
    Validate {
        file: PathBuf,
        /// Manifest to check against (default: manifest.json next to the file).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Print the diagnostics and exit 0 even when checks fail.
        #[arg(long)]
        report: bool,
    },
}

/// 2 config, 3 data, 4 numerical.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<OhtError>() {
            return match err {
                OhtError::InvalidInput(_) | OhtError::UnsupportedState(_) => 2,
                OhtError::Format(_)
                | OhtError::Io(_)
                | OhtError::Json(_)
                | OhtError::Aliasing { .. }
                | OhtError::PhaseCoverage(_)
                | OhtError::NonUniformPhases(_)
                | OhtError::EmptyPhaseBins(_) => 3,
                _ => 4,
            };
        }
    }
    3
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(cfg.seed),
        out: cli.out.clone().or_else(|| cfg.outputs.dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        formats: cli.format.map(|f| vec![f]).unwrap_or_else(|| cfg.outputs.formats.clone()),
        cfg,
    };
    let manifest = match cli.command {
        Command::Simulate => commands::simulate(&ctx)?,
        Command::Reconstruct { dataset, method, n_max, bootstrap } => commands::reconstruct(&ctx, &dataset, method, n_max, bootstrap)?,
        Command::Moments { dataset } => commands::moments(&ctx, &dataset)?,
        Command::Twomode => commands::twomode(&ctx)?,
        Command::Array => commands::array(&ctx)?,
        Command::Sample => commands::sample(&ctx)?,
        Command::Calibrate => commands::calibrate(&ctx)?,
        Command::Validate { file, manifest, report } => {
            let diag = validate::validate(&file, manifest.as_deref());
            emit(&serde_json::to_string_pretty(&diag)?)?;
            return Ok(if diag.ok || report { 0 } else { 3 });
        }
    };
    emit(&manifest.display().to_string())?;
    Ok(0)
}

/// Prints a line, treating a closed pipe as success.
fn emit(text: &str) -> std::io::Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
