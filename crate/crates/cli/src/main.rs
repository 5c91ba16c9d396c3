//! `fracvi`: configuration-driven solves and studies.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fracvi::Error),
    #[error("acceptance bound failed: {0}")]
    Gate(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Core(e) => e.reason(),
            CliError::Gate(_) => "acceptance_bound_failed",
            CliError::Io(_) => "io",
        }
    }

    /// 1 config, 2 solver divergence, 3 failed study gate.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(
                fracvi::Error::Divergence { .. }
                | fracvi::Error::OuterMaxIter { .. }
                | fracvi::Error::OracleMaxIter { .. }
                | fracvi::Error::LinearSolve(_),
            ) => 2,
            CliError::Gate(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    SolveVi,
    SolveQvi,
    PenaltySweep,
    StudyLipschitz,
    StudyHolder,
    StudySigmaLimit,
    StudyMosco,
    Certificate,
    OracleCheck,
}

#[derive(Debug, Parser)]
#[command(name = "fracvi", version, about = "Fractional-gradient constrained VI/QVI solver")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[run] out`, defaults to `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 picks automatically.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
            eprintln!("cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let code = run::execute(args.command, &args.config, args.out.as_deref(), args.seed);
    ExitCode::from(code)
}
