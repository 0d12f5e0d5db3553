mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::EngineConfig;
use crate::error::CliError;

/// Long-term conversational memory with schema-constrained recall.
#[derive(Debug, Parser)]
#[command(name = "schemamem", version)]
struct Cli {
    /// Engine configuration file (TOML). Falls back to $SCHEMAMEM_CONFIG,
    /// then ./schemamem.toml, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stream a JSON-lines transcript through schema evolution.
    Ingest {
        #[arg(long)]
        transcript: PathBuf,
    },
    /// Recall memory for a query and print the result record.
    Query(QueryArgs),
    /// Print turn, concept and edge counts and the highest-IDF concepts.
    Stats {
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Write the associative graph to stdout.
    ExportGraph {
        #[arg(long, value_enum, default_value_t = GraphFormat::Dot)]
        format: GraphFormat,
    },
    /// Copy engine state to or from a snapshot file.
    Snapshot {
        #[command(subcommand)]
        action: SnapshotAction,
    },
}

#[derive(Debug, clap::Args)]
pub struct QueryArgs {
    pub query: String,
    /// Cap on seed plus context concepts.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub hops: Option<usize>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long, value_parser = positive_f64)]
    pub temperature: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Neighbours kept per node in topk mode.
    #[arg(long)]
    pub m: Option<usize>,
    /// Draws per node in sample mode.
    #[arg(long)]
    pub samples: Option<usize>,
    /// RNG seed; required by sample mode.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also print the synthesized answer (or the context fallback).
    #[arg(long)]
    pub answer: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Topk,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Dot,
    Json,
}

#[derive(Debug, Subcommand)]
enum SnapshotAction {
    /// Write the current state to PATH.
    Save { path: PathBuf },
    /// Verify PATH and make it the current state.
    Load { path: PathBuf },
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if t > 0.0 && t.is_finite() {
        Ok(t)
    } else {
        Err(format!("temperature must be > 0, got {s}"))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = EngineConfig::locate(cli.config.as_deref())?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Ingest { transcript } => commands::ingest(&cfg, &transcript, &mut out),
        Command::Query(args) => commands::query(&cfg, &args, &mut out),
        Command::Stats { top } => commands::stats(&cfg, top, &mut out),
        Command::ExportGraph { format } => commands::export_graph(&cfg, format, &mut out),
        Command::Snapshot {
            action: SnapshotAction::Save { path },
        } => commands::snapshot_save(&cfg, &path, &mut out),
        Command::Snapshot {
            action: SnapshotAction::Load { path },
        } => commands::snapshot_load(&cfg, &path, &mut out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("schemamem: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
