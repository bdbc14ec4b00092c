//! Batch command line for the gpmotion model: dataset generation, training,
//! registration, interpolation, simulation, transport, and evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.

mod commands;
mod config;
mod pgm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ProvideSpec, TrainOverrides};
use config::RunConfig;

/// Command-level error with its process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Divergence(m) => m,
        }
    }
}

impl From<gpmotion::model::ModelError> for CliError {
    fn from(e: gpmotion::model::ModelError) -> Self {
        use gpmotion::model::ModelError;
        match e {
            ModelError::Divergence { .. } => CliError::Divergence(e.to_string()),
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<gpmotion::synth::SynthError> for CliError {
    fn from(e: gpmotion::synth::SynthError) -> Self {
        use gpmotion::synth::SynthError;
        match e {
            SynthError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<gpmotion::deform::DeformError> for CliError {
    fn from(e: gpmotion::deform::DeformError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<gpmotion::metrics::MetricsError> for CliError {
    fn from(e: gpmotion::metrics::MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "gpmotion", version, about = "Probabilistic temporal motion model on image sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (MOTN file plus manifest).
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write checkpoint + training log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the temporally independent (identity-kernel) prior.
        #[arg(long)]
        no_gp: bool,
        /// Override the temporal-dropout probability.
        #[arg(long)]
        td_rate: Option<f64>,
        /// Override the epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Register sequences: deformations, warped frames, metrics.
    Register {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Single sequence index (default: all).
        #[arg(long)]
        index: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct full motion from a subset of frames, with linear and
    /// cubic field-interpolation baselines.
    Interpolate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        index: Option<usize>,
        /// all | every2 | every5 | first5 | frames:0,10
        #[arg(long)]
        provide: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate full motion from the reference frame alone.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        index: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a saved motion matrix to another subject's reference frame.
    Transport {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// motion_matrix.json from a register run.
        #[arg(long)]
        motion: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        index: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: per-sequence CSV and aggregate JSON, with the
    /// undeformed baseline and an optional rotated-test-set protocol.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated degrees, e.g. 0,90,180,270.
        #[arg(long)]
        rotations: Option<String>,
        /// Worker threads (GPMOTION_THREADS is the fallback).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_gen_data(&cfg, &out)
        }
        Command::Train { config, data, out, no_gp, td_rate, epochs } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_train(&cfg, &data, &out, &TrainOverrides { no_gp, td_rate, epochs })
        }
        Command::Register { config, checkpoint, data, index, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_register(&cfg, &checkpoint, &data, index, &out)
        }
        Command::Interpolate { config, checkpoint, data, index, provide, out } => {
            let cfg = RunConfig::load(&config)?;
            let spec = ProvideSpec::parse(&provide)?;
            commands::cmd_interpolate(&cfg, &checkpoint, &data, index, &spec, &out)
        }
        Command::Simulate { config, checkpoint, data, index, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_simulate(&cfg, &checkpoint, &data, index, &out)
        }
        Command::Transport { config, checkpoint, motion, data, index, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_transport(&cfg, &checkpoint, &motion, &data, index, &out)
        }
        Command::Eval { config, checkpoint, data, rotations, threads, out } => {
            let cfg = RunConfig::load(&config)?;
            let rot = commands::resolve_rotations(rotations.as_deref(), &cfg)?;
            let threads = commands::resolve_threads(threads, &cfg);
            commands::cmd_eval(&cfg, &checkpoint, &data, &rot, threads, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, parse failures usage errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
