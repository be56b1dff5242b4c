//! `resrmn`: experiment runs, eigenvalue dumps, reports and dataset
//! inspection.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resrmn::ErrorClass;

#[derive(Parser)]
#[command(name = "resrmn", version, about = "Residual reservoir memory network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search, select and evaluate a model on one dataset.
    Run { config: PathBuf },
    /// Dump eigenvalues of the orthogonal matrices and of the Jacobian.
    Spectrum { config: PathBuf },
    /// Relative test accuracy of each model against a baseline.
    Report {
        #[arg(required = true)]
        ledgers: Vec<PathBuf>,
        #[arg(long)]
        baseline: String,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print dataset shapes and class histograms.
    Inspect {
        train: PathBuf,
        test: PathBuf,
        #[arg(long, default_value_t = 1)]
        n_features: usize,
        /// Treat the inputs as IDX images with these label files.
        #[arg(long, num_args = 2, value_names = ["TRAIN_LABELS", "TEST_LABELS"])]
        idx_labels: Option<Vec<PathBuf>>,
    },
}

/// A failed command and the component it failed in.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
    Core(resrmn::Error),
}

impl From<resrmn::Error> for Failure {
    fn from(e: resrmn::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn class(&self) -> ErrorClass {
        match self {
            Failure::Config(_) => ErrorClass::Config,
            Failure::Data(_) => ErrorClass::Data,
            Failure::Core(e) => e.class(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let component = match self.class() {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        };
        match self {
            Failure::Config(m) | Failure::Data(m) => write!(f, "{component} error: {m}"),
            Failure::Core(e) => write!(f, "{component} error: {e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => commands::run(&config),
        Command::Spectrum { config } => commands::spectrum(&config),
        Command::Report {
            ledgers,
            baseline,
            output,
        } => commands::report(&ledgers, &baseline, output.as_deref()),
        Command::Inspect {
            train,
            test,
            n_features,
            idx_labels,
        } => commands::inspect(&train, &test, n_features, idx_labels.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("resrmn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
