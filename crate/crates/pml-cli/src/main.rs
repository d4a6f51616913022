//! Command-line front end: workload generation, bound evaluation, noise
//! calibration, oracle certification, and the two result sweeps, with
//! reproducible CSV/JSON output.

// Negated float comparisons (`!(x > 0)`) are deliberate: validation must
// treat NaN as out of range, which `x <= 0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod commands;
mod config;
mod output;

/// Failure classes mapped onto process exit codes: usage errors exit 1,
/// numeric/enumeration and I/O failures exit 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(pml_core::Error),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) | CliError::Io(_) => 2,
        }
    }

    fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Io(m) => m.clone(),
            CliError::Numeric(e) => e.to_string(),
        }
    }
}

impl From<pml_core::Error> for CliError {
    fn from(e: pml_core::Error) -> Self {
        CliError::Numeric(e)
    }
}

/// One-line machine-parsable diagnostic: `error: <category>: <message>`.
fn report(category: &str, message: &str) {
    let flat = message.replace('\n', "; ");
    eprintln!("error: {category}: {flat}");
}

fn main() -> ExitCode {
    let cli = match config::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            report("usage", line.trim_start_matches("error: ").trim());
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.category(), &e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
