//! `chillopt` command-line driver.
//!
//! Configuration precedence: command-line flags override values from the
//! `--config` JSON file, which override built-in defaults. Results go to
//! files under `--out`; diagnostics go to stderr.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or model
//! error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<chillopt::Error> for CliError {
    fn from(e: chillopt::Error) -> Self {
        match e {
            chillopt::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "chillopt", version, about = "Chiller-plant forecasting, optimization and savings verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON configuration file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Cooling,
    Power,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MethodArg {
    LinearDaily,
    LinearMonthly,
    ProfileForecaster,
}

#[derive(Subcommand)]
enum Command {
    /// Generate legacy-operation history CSVs.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        days: Option<usize>,
    },
    /// Train a profile forecaster on a history directory.
    TrainForecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        target: Option<TargetArg>,
    },
    /// Train the plant surrogate on a history directory.
    TrainSurrogate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Recommend setpoints for a cooling profile.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        surrogate: PathBuf,
        /// Weather CSV covering the horizon.
        #[arg(long)]
        weather: PathBuf,
        /// Cooling profile CSV (`timestamp,cooling_kw`).
        #[arg(long, conflicts_with = "forecaster")]
        profile: Option<PathBuf>,
        /// Forecaster JSON; needs `--history` for the lag window.
        #[arg(long, requires = "history")]
        forecaster: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Adjusted-baseline savings between two history directories.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        reporting: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Run the deploy / augment / retrain experiment.
    ClosedLoop {
        #[command(flatten)]
        common: Common,
    },
    /// Render plot-data CSVs from a closed-loop or benchmark output directory.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, days } => commands::simulate(&common, days),
        Command::TrainForecast { common, data, target } => commands::train_forecast(&common, &data, target),
        Command::TrainSurrogate { common, data } => commands::train_surrogate(&common, &data),
        Command::Optimize {
            common,
            surrogate,
            weather,
            profile,
            forecaster,
            history,
        } => commands::optimize(&common, &surrogate, &weather, profile.as_deref(), forecaster.as_deref(), history.as_deref()),
        Command::Benchmark {
            common,
            baseline,
            reporting,
            method,
        } => commands::benchmark(&common, &baseline, &reporting, method),
        Command::ClosedLoop { common } => commands::closed_loop(&common),
        Command::Report { input, out, force } => commands::report(&input, &out, force),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
