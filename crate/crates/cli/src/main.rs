//! `softabs` command-line tool.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 on usage errors.

mod bench;
mod config;
mod diagnose;
mod evidence;
mod sample;
mod simulate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] softabs::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "softabs", version, about = "Softabs RMHMC for reduced-rank GP models")]
struct Cli {
    /// Worker threads for parallel chains (SOFTABS_THREADS takes precedence).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset and write it as CSV plus a truth JSON.
    Simulate(simulate::Args),
    /// Run one RMHMC (or Euclidean HMC) chain.
    Sample(sample::Args),
    /// Estimate the model evidence by thermodynamic integration.
    Evidence(evidence::Args),
    /// Time eigendecompositions, trace contractions and leapfrog blocks.
    Bench(bench::Args),
    /// Convergence diagnostics of a chain JSONL file.
    Diagnose(diagnose::Args),
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var("SOFTABS_THREADS") {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("SOFTABS_THREADS must be a positive integer, got '{v}'"))),
        },
        _ => match flag {
            Some(0) => Err(CliError::Usage("--threads must be positive".into())),
            other => Ok(other),
        },
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(args) => simulate::run(args),
        Command::Sample(args) => sample::run(args),
        Command::Evidence(args) => evidence::run(args),
        Command::Bench(args) => bench::run(args),
        Command::Diagnose(args) => diagnose::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub(crate) fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Pretty JSON to `path`, or to stdout when `path` is `None`.
pub(crate) fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(softabs::Error::from)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(CliError::io(p)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// `out.ext` → `out.<suffix>`
pub(crate) fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}
