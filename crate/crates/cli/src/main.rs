//! `aderdec` command line driver.
//!
//! Exit codes: 0 success, 1 other failures, 2 usage errors, 3 numerical divergence.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::OutputRoot;

/// Bad flags or values detected after argument parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub(crate) fn dispatch(command: &Command, root: &OutputRoot) -> anyhow::Result<()> {
    match command {
        Command::Solve(a) => commands::solve(a, root),
        Command::Converge(a) => commands::converge(a, root),
        Command::Stability(a) => commands::stability(a, root),
        Command::PdeSolve(a) => commands::pde_solve(a, root),
        Command::Manifest(a) => manifest::run(a),
    }
}

pub(crate) fn is_divergence(e: &anyhow::Error) -> bool {
    matches!(e.downcast_ref::<aderdec::Error>(), Some(aderdec::Error::Divergence { .. }))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if is_divergence(e) {
        return 3;
    }
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<aderdec::Error>() {
        Some(aderdec::Error::InvalidArgument(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match dispatch(&cli.command, &OutputRoot::default()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
