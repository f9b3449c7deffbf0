//! Batch experiments for the truncated silicosis model, driven by a TOML
//! configuration and producing CSV tables plus a JSON summary.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage,
//! configuration and I/O problems, 3 when the numerics abort.

// `!(v > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::output::{ErrorReport, OutDir, Summary, WriteError, SCHEMA_VERSION};

/// Environment variable that, when set, overrides `--out`.
pub const OUT_DIR_ENV: &str = "SILICOSIS_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Converge,
    Equilibrium,
    Verify,
    Semigroup,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Converge => "converge",
            Command::Equilibrium => "equilibrium",
            Command::Verify => "verify",
            Command::Semigroup => "semigroup",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "silicosis", version, about = "Truncated silicosis kinetics: simulation and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Integrate one truncation and write its trajectory.
    Simulate(Args),
    /// Compare a ladder of truncation orders.
    Converge(Args),
    /// Find a steady state of the truncated system.
    Equilibrium(Args),
    /// Integrate and check every balance, identity and envelope.
    Verify(Args),
    /// Compare split flows against direct ones.
    Semigroup(Args),
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; `SILICOSIS_OUT_DIR` takes precedence when set.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Reserved. Recorded in the summary; no command draws random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Sub {
    fn split(&self) -> (Command, &Args) {
        match self {
            Sub::Simulate(a) => (Command::Simulate, a),
            Sub::Converge(a) => (Command::Converge, a),
            Sub::Equilibrium(a) => (Command::Equilibrium, a),
            Sub::Verify(a) => (Command::Verify, a),
            Sub::Semigroup(a) => (Command::Semigroup, a),
        }
    }
}

fn out_dir(args: &Args) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => args.out.clone(),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let (command, args) = cli.command.split();
    let exp = match config::load(&args.config).and_then(|c| c.prepare(command)) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("error: invalid configuration {}: {e}", args.config.display());
            return 2;
        }
    };
    let dir = out_dir(args);
    match execute(command, &exp, &dir, args.seed) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", dir.display());
            2
        }
    }
}

fn execute(command: Command, exp: &config::Experiment, dir: &Path, seed: Option<u64>) -> std::io::Result<i32> {
    let mut out = OutDir::create(dir)?;
    let outcome = match command {
        Command::Simulate => commands::simulate(exp, &mut out),
        Command::Converge => commands::converge(exp, &mut out),
        Command::Equilibrium => commands::equilibrium(exp, &mut out),
        Command::Verify => commands::verify(exp, &mut out),
        Command::Semigroup => commands::semigroup(exp, &mut out),
    };
    let mut summary = Summary {
        schema_version: SCHEMA_VERSION,
        command: command.name(),
        passed: false,
        seed,
        checks: Vec::new(),
        results: serde_json::Value::Null,
        error: None,
        artifacts: Vec::new(),
    };
    let code = match outcome {
        Ok(o) => {
            summary.passed = o.checks.iter().all(|c| c.passed);
            for c in o.checks.iter().filter(|c| !c.passed) {
                eprintln!("check failed: {} ({}) = {:e}", c.name, c.operation, c.value);
            }
            summary.checks = o.checks;
            summary.results = o.results;
            if summary.passed {
                0
            } else {
                1
            }
        }
        Err(WriteError::Io(e)) => return Err(e),
        Err(WriteError::Model(e)) => {
            eprintln!("error: {} in {}: {e}", e.name(), e.module());
            summary.error = Some(ErrorReport::from(&e));
            commands::error_exit_code(&e)
        }
    };
    out.write_summary(&mut summary)?;
    Ok(code)
}
