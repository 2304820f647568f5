//! `respctx`: synthesize sessions, extract features, train and evaluate the
//! context-conditioned pipeline, and rank ECG biomarkers.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "respctx", version, about = "Context-conditioned respiration inference from ECG and wrist IMU")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic session with planted truth.
    Synth(SynthArgs),
    /// Extract synchronized ECG and IMU feature instances.
    Features(RunArgs),
    /// Train the context classifier and regression banks on all data.
    Train(RunArgs),
    /// Hold-out evaluation at one ratio or over the full sweep.
    Eval(RunArgs),
    /// Biomarker relevance per target and context.
    Rank(RunArgs),
    /// Human-readable tables from a directory of eval/rank outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// TOML file with generator settings; unspecified fields keep defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub subject: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetArg {
    Br,
    Ve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Glm,
    Rf,
    Svm,
    Gpr,
    Nca,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Instance,
    Block,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    /// Session manifest; repeat for several subjects.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Response to model; both when omitted.
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    #[arg(long, value_enum, default_value = "all")]
    pub model: ModelArg,
    /// Training fraction of the hold-out split.
    #[arg(long, conflicts_with = "sweep")]
    pub ratio: Option<f64>,
    /// Evaluate every ratio from 80/20 to 20/80.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, default_value_t = 0.8)]
    pub tau: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "instance")]
    pub split: SplitArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Directory holding metrics.json and/or relevance.csv.
    #[arg(long)]
    pub input: PathBuf,
    /// Where report.txt goes; defaults to the input directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] respctx::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
        }
    }
}

fn error_json(code: &str, message: &str) -> String {
    serde_json::json!({ "error": { "code": code, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            eprintln!("{}", error_json("usage", msg.lines().next().unwrap_or("invalid arguments")));
            return ExitCode::from(2);
        }
    };
    let run = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Features(a) => commands::features(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Rank(a) => commands::rank(a),
        Command::Report(a) => commands::report(a),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(e.code(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
