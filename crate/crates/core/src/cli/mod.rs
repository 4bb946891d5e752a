//! Command-line front end: configuration, measurement ingestion, fits,
//! simulations and report emission.
//!
//! [`run`] is the whole program; the binary only forwards its exit code.
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure (non-convergence, rank deficiency, non-finite model).

mod commands;
mod config;
mod csvio;
mod datasets;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{half_crossing, sideband_peaks};
pub use config::{reference_markdown, FitSettings, RunConfig, CONFIG_VERSION};
pub use csvio::{emit_table, emit_trace, parse_table, parse_trace, Table, TRACE_HEADER};
pub use datasets::{bundled_datasets, gain_powers, shift_noise_hz, spectrum_freqs};
pub use report::{digest, Entry, FitSummary, Report};

use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "SQZLAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "sqzlab",
    version,
    about = "Squeezed-light source models, fits and control-loop simulations"
)]
struct Cli {
    /// JSON configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for every simulation (overrides the configuration).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Print the report as JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Print the default configuration and write the key reference to the
    /// output directory.
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Efficiency budget, escape efficiency and squeezing limits.
    Budget {
        /// Propagation loss of the projected waveguide, dB/m.
        #[arg(long, value_name = "DB_PER_M")]
        projection_alpha: Option<f64>,
    },
    /// Fit a measurement table.
    Fit {
        kind: FitKind,
        /// Headered CSV file.
        data: PathBuf,
    },
    /// Run a simulation and write its trace.
    Simulate { kind: SimKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    Gain,
    Squeezing,
    Spectrum,
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    Lock,
    Align,
    Instability,
    Mzi,
}

impl FitKind {
    fn name(self) -> &'static str {
        match self {
            Self::Gain => "gain",
            Self::Squeezing => "squeezing",
            Self::Spectrum => "spectrum",
            Self::Shift => "shift",
        }
    }
}

impl SimKind {
    fn name(self) -> &'static str {
        match self {
            Self::Lock => "lock",
            Self::Align => "align",
            Self::Instability => "instability",
            Self::Mzi => "mzi",
        }
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::RankDeficient { .. } | Error::Evaluation { .. } => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // a second call in the same process (tests) finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
            let _ = writeln!(err, "error: {first}");
            return EXIT_INPUT;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            for line in f.message.lines() {
                let _ = writeln!(err, "error: {line}");
            }
            f.code
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    configure_threads()?;
    if cli.print_defaults {
        let defaults = RunConfig::default();
        let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&defaults.out_dir));
        let json = defaults.to_json() + "\n";
        write_file(&dir, "config_reference.md", &reference_markdown())?;
        write_file(&dir, "defaults.json", &json)?;
        out.write_all(json.as_bytes())
            .map_err(|e| Failure::input(e.to_string()))?;
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Failure::input("no command given; see --help"));
    };
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .with_seed(cli.seed);
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&config.out_dir));
    let ctx = commands::Context { config, dir };

    let outcome = match command {
        Command::Budget { projection_alpha } => commands::budget(&ctx, *projection_alpha),
        Command::Fit { kind, data } => commands::fit(&ctx, *kind, data),
        Command::Simulate { kind } => commands::simulate(&ctx, *kind),
    };
    let (report, failure) = match outcome {
        Ok(r) => (r, None),
        Err(commands::Outcome::Failed(f)) => return Err(f),
        Err(commands::Outcome::Unconverged(r, f)) => (*r, Some(f)),
    };
    let text = if cli.json { report.to_json() } else { report.to_text() };
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::input(e.to_string()))?;
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}
