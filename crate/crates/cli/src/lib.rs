//! Command-line front end: JSON configuration in, CSV data and text
//! summaries out.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use config::{load_config, parse_config, Method, RunConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fredstab", version, about = "Stabilizing feedback for integral delay equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Open,
    Closed,
    Both,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Directory for CSV output (created if missing).
    #[arg(long, short, default_value = "fredstab-out")]
    pub out: PathBuf,
    /// Kernel grid subintervals per τ0.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub maxiter: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the plant and test spectral controllability.
    Check(Common),
    /// Compute the feedback kernels and their residuals.
    Kernels(Common),
    /// Simulate the open and/or closed loop.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
    },
    /// Locate the open-loop characteristic roots.
    Spectrum(Common),
    /// Kernels, residuals, closed-loop spectrum and decay rate against tolerances.
    Verify(Common),
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "fredstab: {e}");
            e.exit_code()
        }
    }
}
