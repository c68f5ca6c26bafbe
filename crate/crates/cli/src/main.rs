//! `mlpath run <config.json> [--out DIR]` and `mlpath plotdata <record.json>`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid config or arguments,
//! 3 numerical failure. Every failure prints a one-line JSON error record
//! on stderr.

mod config;
mod plot;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "mlpath", version, about = "Most-likely-path experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write `record.json` plus CSV files.
    Run {
        config: PathBuf,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write `plotdata.csv` next to a run record.
    Plotdata { record: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Library(#[from] mlpath::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Parse(_) | CliError::Field { .. } => 2,
            CliError::Library(e) => match e {
                mlpath::Error::Domain(_) | mlpath::Error::Unsupported(_) => 3,
                _ => 2,
            },
        }
    }

    fn record(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Io { .. } => "io",
            CliError::Parse(_) => "parse",
            CliError::Field { .. } => "invalid_field",
            CliError::Library(_) if self.code() == 3 => "numerical",
            CliError::Library(_) => "invalid_input",
        };
        let mut record = json!({"error": kind, "exit_code": self.code(), "message": self.to_string()});
        if let CliError::Field { field, .. } = self {
            record["field"] = json!(field);
        }
        record
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MLPATH_THREADS") else { return Ok(()) };
    let threads: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| CliError::Field {
        field: "MLPATH_THREADS".into(),
        message: format!("must be a positive integer, got `{raw}`"),
    })?;
    // Fails only if the pool already exists, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    config.validate().map_err(|e| CliError::Field { field: e.field, message: e.message })?;
    Ok(config)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let out = out.or_else(|| cfg.out_dir.clone().map(PathBuf::from)).unwrap_or_else(|| "mlpath-out".into());
            run::run(&cfg, &out)?;
            println!("{}", run::record_path(&out).display());
        }
        Command::Plotdata { record } => {
            let text = std::fs::read_to_string(&record).map_err(|e| CliError::io(&record, e))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", record.display())))?;
            match plot::plotdata(&value) {
                Some(csv) => {
                    let dir = record.parent().unwrap_or(Path::new("."));
                    let path = dir.join("plotdata.csv");
                    std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
                    println!("{}", path.display());
                }
                None => eprintln!("notice: nothing to plot in {}", record.display()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.code())
        }
    }
}
