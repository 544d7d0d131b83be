//! The `ndtt` command line: `check`, `train`, `eval`, `sample` and
//! `predict`. Exit codes: 0 ok, 1 usage, 2 invalid program, 3 data or
//! checkpoint mismatch, 4 numeric failure.

mod args;
mod commands;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;
use ndtt::NdttError;

pub use args::{Cli, Command, ModeArg, RunConfig, TaskArg};
pub use commands::run;

/// A failed command: the underlying error plus what was being processed.
#[derive(Debug)]
pub struct Failure {
    pub context: Option<String>,
    pub error: NdttError,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        self.error.exit_code()
    }

    pub(crate) fn at(context: impl fmt::Display, error: impl Into<NdttError>) -> Self {
        Failure { context: Some(context.to_string()), error: error.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.context {
            Some(c) => write!(f, "{c}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for Failure {}

impl From<NdttError> for Failure {
    fn from(error: NdttError) -> Self {
        Failure { context: None, error }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 { 0 } else { 1 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
