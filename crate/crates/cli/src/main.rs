//! `fbf`: run forward-backward-forward flows and iterations on mixed
//! variational inequalities and emit CSV/JSON artifacts.
//!
//! Exit codes: 0 converged, 1 usage or parse error, 2 horizon reached,
//! 3 divergence.

mod config;
mod run;
mod settings;

use std::path::Path;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use config::Config;
use run::Status;
use settings::{resolve, Command, RunArgs, Settings};

#[derive(Debug, Parser)]
#[command(name = "fbf", version, about = "Forward-backward-forward dynamics for mixed variational inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Integrate the continuous-time flow; writes trajectory.csv and report.json.
    Solve(RunArgs),
    /// Run the discrete iteration; writes iterates.csv and report.json.
    Iterate(RunArgs),
    /// Classify the operator and build a stability certificate; writes analysis.json.
    Analyze(RunArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Status::Usage as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, args) = match &cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Iterate(a) => (Command::Iterate, a),
        Cmd::Analyze(a) => (Command::Analyze, a),
    };
    let runs = match plan(cmd, args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(Status::Usage as u8);
        }
    };
    let statuses = match args.jobs {
        Some(jobs) if runs.len() > 1 => {
            match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
                Ok(pool) => pool.install(|| runs.par_iter().map(|s| execute(cmd, s)).collect()),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(Status::Usage as u8);
                }
            }
        }
        _ => runs.iter().map(|s| execute(cmd, s)).collect::<Vec<_>>(),
    };
    let worst = statuses.into_iter().max().unwrap_or(Status::Converged);
    ExitCode::from(worst as u8)
}

/// Resolves every run before anything is written, so a bad config in a
/// batch leaves no partial output behind.
fn plan(cmd: Command, args: &RunArgs) -> Result<Vec<Settings>> {
    if args.config.is_empty() {
        return Ok(vec![resolve(cmd, args, None)?]);
    }
    let configs = args
        .config
        .iter()
        .map(|p| Config::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let batch = configs.len() > 1;
    configs
        .iter()
        .map(|c| {
            let mut s = resolve(cmd, args, Some(c))?;
            if batch {
                s.output = s.output.join(run_name(&c.path));
            }
            Ok(s)
        })
        .collect()
}

fn run_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn execute(cmd: Command, s: &Settings) -> Status {
    let result = match cmd {
        Command::Solve => run::solve(s),
        Command::Iterate => run::iterate_cmd(s),
        Command::Analyze => run::analyze(s),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        Status::Usage
    })
}
