mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spades::SpadesError;

/// Sparse density estimation with an l1-penalized L2 loss.
#[derive(Parser)]
#[command(name = "spades", version, about)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one penalized estimate and report coherence diagnostics.
    Fit(FitArgs),
    /// Cross-validate the support size and fit at the selected level.
    Tune(FitArgs),
    /// Run a simulation study.
    Study(StudyArgs),
    /// Summarize the Gram matrix of a dictionary.
    GramReport(GramArgs),
    /// Evaluate the mixture identification conditions of a study.
    CheckConditions(StudyArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the cross-validation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// simple | bernstein | data-driven | scalar:<w> | mixture
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled configuration: fig1_k2, fig1_k5, fig3_separation, fig4_circle.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct GramArgs {
    #[arg(long)]
    config: PathBuf,
    /// Sample used to size Haar dictionaries without an explicit level.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const PARSE: u8 = 2;
    pub const NOT_CONVERGED: u8 = 3;
    pub const CONFIG: u8 = 4;

    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Self::CONFIG, message)
    }
}

impl From<SpadesError> for CliError {
    fn from(e: SpadesError) -> Self {
        let code = match e {
            SpadesError::Parse { .. } | SpadesError::EmptySample => Self::PARSE,
            SpadesError::Config(_)
            | SpadesError::InvalidParameter { .. }
            | SpadesError::WrongDictionaryKind { .. }
            | SpadesError::DimensionMismatch { .. }
            | SpadesError::DegenerateAtom { .. } => Self::CONFIG,
            _ => 1,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(1, e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::new(1, e.to_string()))?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit(&a, false),
        Command::Tune(a) => commands::fit(&a, true),
        Command::Study(a) => commands::study(&a),
        Command::GramReport(a) => commands::gram_report(&a),
        Command::CheckConditions(a) => commands::check_conditions(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
