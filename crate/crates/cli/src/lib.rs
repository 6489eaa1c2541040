//! Command-line front end: dataset ingestion, synthetic data generation,
//! training, prediction, baseline comparison, and selection statistics.
//!
//! Progress goes to standard error; data (summaries, CSV tables, reports)
//! goes to standard output. Exit codes: 0 success, 1 usage error, 2 data or
//! schema error, 3 training error, 4 persistence error.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod csvio;
pub mod synth;

pub use config::{Overrides, RunConfig};
pub use synth::SynthKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Train(String),
    #[error("{0}")]
    Persist(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Train(_) => 3,
            CliError::Persist(_) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "dml",
    about = "Adaptive gradient-boosting / neural ensemble for tabular regression",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Configuration overrides shared by the commands that train or evaluate.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// Key=value configuration file; flags override file values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; component seeds derive from it
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of training data held out for the gate
    #[arg(long)]
    pub meta_fraction: Option<f64>,
    /// Weight of the gate's KL-to-uniform exploration term
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Tree-vs-gradient mixing weight for fused importances
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Monte Carlo dropout passes per prediction
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Integration steps for gradient attributions
    #[arg(long)]
    pub ig_steps: Option<usize>,
}

impl ConfigArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            meta_fraction: self.meta_fraction,
            alpha: self.alpha,
            lambda: self.lambda,
            mc_samples: self.mc_samples,
            ig_steps: self.ig_steps,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model on a CSV dataset and write the model file
    Train {
        /// Training data (CSV with a header row)
        data: PathBuf,
        /// Where to write the model file
        #[arg(long)]
        out: PathBuf,
        /// Name of the target column
        #[arg(long, default_value = "target")]
        target_col: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Split, train, and print the four-model metrics table as CSV
    Compare {
        data: PathBuf,
        #[arg(long, default_value = "target")]
        target_col: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Predict every row of a CSV, one report line per row
    Predict {
        data: PathBuf,
        /// Model file written by `train`
        #[arg(long)]
        model: PathBuf,
        /// Target column to ignore if present
        #[arg(long, default_value = "target")]
        target_col: String,
    },
    /// Selection statistics and fused feature importances over a dataset
    Inspect {
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "target")]
        target_col: String,
    },
    /// Generate a synthetic benchmark CSV
    Synth {
        /// Generator family
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parse arguments and dispatch. Returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };
    let result = match cli.command {
        Command::Train {
            data,
            out,
            target_col,
            config,
        } => commands::train(&data, &out, &target_col, config.config.as_deref(), &config.overrides()),
        Command::Compare {
            data,
            target_col,
            config,
        } => commands::compare(&data, &target_col, config.config.as_deref(), &config.overrides()),
        Command::Predict {
            data,
            model,
            target_col,
        } => commands::predict(&model, &data, &target_col),
        Command::Inspect {
            data,
            model,
            target_col,
        } => commands::inspect(&model, &data, &target_col),
        Command::Synth {
            kind,
            rows,
            noise_std,
            seed,
            out,
        } => commands::synth(kind, rows, noise_std, seed, &out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
