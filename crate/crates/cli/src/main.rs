mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::Settings;

/// Text-to-SQL agent over SQLite databases.
#[derive(Debug, Parser)]
#[command(name = "sqlagent", version)]
struct Cli {
    /// TOML settings file (a run directory's config.toml also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
enum Command {
    /// Build and cache the column index, value index and join graph of every
    /// database under the root.
    Index {
        /// Only these databases.
        #[arg(long = "db")]
        dbs: Vec<String>,
    },
    /// Answer one question with a single session.
    Ask {
        #[arg(long)]
        db: String,
        #[arg(long)]
        question: String,
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        evidence: Option<String>,
        /// Exemplar family: spider or bird.
        #[arg(long, default_value = "bird")]
        format: String,
        /// Transcript file or run directory to replay instead of calling a model.
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        replay: Option<PathBuf>,
    },
    /// Run a dataset and score execution accuracy.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// spider or bird.
        #[arg(long)]
        format: String,
        /// Transcript file or run directory to replay instead of calling a model.
        #[arg(long, conflicts_with = "predictions")]
        #[serde(skip_serializing_if = "Option::is_none")]
        replay: Option<PathBuf>,
        /// Predicted SQL, one query per line in item order; no sessions are run.
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        predictions: Option<PathBuf>,
    },
    /// Difficulty statistics of a dataset, plus schema statistics when its
    /// databases are under the root.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "spider")]
        format: String,
    },
    /// Write the bundled toy databases and the golden run inputs.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
