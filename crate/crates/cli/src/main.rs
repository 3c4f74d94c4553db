#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Surface(#[from] fracmatch::SurfaceError),
    #[error(transparent)]
    Spectral(#[from] fracmatch::SpectralError),
    #[error(transparent)]
    Model(#[from] fracmatch::ModelError),
    #[error(transparent)]
    Sim(#[from] fracmatch::SimError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fracmatch",
    version,
    about = "Match fractured surfaces by banded spectral correlation"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Despike and level height maps, writing FHM1 files.
    Preprocess {
        inputs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Per-file report; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Correlate base and tip images listed in a pairing manifest.
    Correlate {
        /// CSV with columns pair_id,label,base_files,tip_files (files separated by ';').
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of base images; defaults to the manifest's directory.
        #[arg(long)]
        base_dir: Option<PathBuf>,
        /// Directory of tip images; defaults to the manifest's directory.
        #[arg(long)]
        tip_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the match and non-match models on a labelled dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Set a false-alarm threshold from non-match scores.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Score each non-match with a model that left its base surface out.
        #[arg(long)]
        loocv: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score pairs and write a decision report.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// default, calibrated, posterior=P, logodds=X or llr=X.
        #[arg(long, default_value = "default")]
        threshold: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluation protocols producing tally tables.
    Eval {
        #[command(subcommand)]
        protocol: EvalCommand,
    },
    /// Simulate a specimen set as a correlation dataset, optionally with images.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 9)]
        surfaces: usize,
        #[arg(long, default_value = "S")]
        prefix: String,
        /// Also write FHM1 images and a pairing manifest.
        #[arg(long)]
        maps: bool,
    },
    /// Height-height correlation and self-affine fit per height map.
    Roughness {
        inputs: Vec<PathBuf>,
        /// Summary CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full curves as long-format CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Leave-one-surface-out within each dataset, pooled per model.
    Loocv {
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        #[arg(long, default_value = "default")]
        threshold: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Consecutive-window subsets over the cross-set protocol.
    Subsets {
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        /// Window sizes, e.g. "2-9" or "3,5,9".
        #[arg(long)]
        k_values: Option<String>,
        #[arg(long, default_value = "default")]
        threshold: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<usize, CliError> {
    let cfg = RunConfig::load(&cli.overrides)?;
    let prior_flag = cli.overrides.prior;
    match cli.command {
        Command::Preprocess { inputs, out, report } => commands::preprocess(&cfg, &inputs, &out, report.as_deref()),
        Command::Correlate {
            manifest,
            base_dir,
            tip_dir,
            out,
        } => commands::correlate(&cfg, &manifest, base_dir.as_deref(), tip_dir.as_deref(), &out),
        Command::Train { data, out } => commands::train(&cfg, &data, &out),
        Command::Calibrate {
            model,
            data,
            loocv,
            out,
        } => commands::calibrate(&cfg, &model, &data, loocv, &out),
        Command::Classify {
            model,
            data,
            threshold,
            out,
        } => commands::classify(&cfg, &model, &data, &threshold, prior_flag, &out),
        Command::Eval { protocol } => match protocol {
            EvalCommand::Loocv { data, threshold, out } => {
                commands::eval_loocv(&cfg, &data, &threshold, cli.overrides.nu, &out)
            }
            EvalCommand::Subsets {
                data,
                k_values,
                threshold,
                out,
            } => commands::eval_subsets(&cfg, &data, k_values.as_deref(), &threshold, cli.overrides.nu, &out),
        },
        Command::Simulate {
            out,
            surfaces,
            prefix,
            maps,
        } => commands::simulate(&cfg, &out, surfaces, &prefix, maps),
        Command::Roughness { inputs, out, curves } => {
            commands::roughness(&cfg, &inputs, out.as_deref(), curves.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} item(s) failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
