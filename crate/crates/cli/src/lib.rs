//! Library side of the `netdual` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 infeasible data, 3 numerical
//! failure.

pub mod commands;
pub mod config;
pub mod data;
pub mod io;

use std::ffi::OsString;
use std::fmt;

use clap::{Parser, Subcommand};

use crate::config::{CommonArgs, Format};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: msg.into(),
        }
    }

    pub fn infeasible(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: msg.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<netdual::Error> for CliError {
    fn from(e: netdual::Error) -> Self {
        let code = match e {
            netdual::Error::Infeasible(_) => 2,
            netdual::Error::Numerical(_) => 3,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "netdual",
    version,
    about = "Primal and dual values of minimal-norm deep networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Primal value, dual value and duality gap.
    Gap(CommonArgs),
    /// Partial-dualization values for l = 0, …, L−2 (CSV by default).
    Staircase(CommonArgs),
    /// Optimal weights from the closed forms.
    Factorize(CommonArgs),
    /// Gradient-descent training with restarts.
    Train(CommonArgs),
    /// Caratheodory reduction of an atomic measure.
    Sparsify(CommonArgs),
}

type Handler = fn(&config::Settings) -> Result<commands::Report, CliError>;

/// Runs one invocation and writes its report to `--out` or stdout.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let (args, default_format, f): (_, _, Handler) = match cli.command {
        Command::Gap(a) => (a, Format::Json, commands::gap),
        Command::Staircase(a) => (a, Format::Csv, commands::staircase),
        Command::Factorize(a) => (a, Format::Json, commands::factorize),
        Command::Train(a) => (a, Format::Json, commands::train),
        Command::Sparsify(a) => (a, Format::Json, commands::sparsify),
    };
    let settings = config::resolve(args, default_format)?;
    let report = f(&settings)?;
    let text = match settings.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report.json)
                .map_err(|e| CliError::numerical(format!("cannot serialise report: {e}")))?;
            s.push('\n');
            s
        }
        Format::Csv => report.csv,
    };
    match &settings.out {
        Some(p) => io::write_atomic(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
