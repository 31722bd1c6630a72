//! `contrast`: build, evaluate, benchmark and export A-vs-B comparison
//! summaries.
//!
//! Exit codes: 0 ok, 1 I/O, 2 config or usage, 3 corpus, 4 gateway,
//! 5 stage output (unparseable or invalid summary), 6 evaluation input,
//! 7 empty export.

mod artifacts;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use error::exit;

#[derive(Debug, Parser)]
#[command(name = "contrast", version, about = "Attributed A-vs-B comparison summaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build one comparison summary and persist its run directory.
    Run(commands::RunArgs),
    /// Score a summary: autorater usefulness, redundancy, inconsistency,
    /// and agreement with human ratings when given.
    Eval(commands::EvalArgs),
    /// Time repeated runs and print summaries per second.
    Bench(commands::BenchArgs),
    /// Sample training examples from finished runs into JSON lines.
    Export(commands::ExportArgs),
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("CONTRAST_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG } else { exit::OK });
        }
    };
    let result = match &cli.command {
        Command::Run(a) => commands::cmd_run(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Bench(a) => commands::cmd_bench(a),
        Command::Export(a) => commands::cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
