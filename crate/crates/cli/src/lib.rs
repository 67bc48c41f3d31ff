//! Command-line front end for `resid-core`.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;
pub mod store;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::args::{Cli, Command, SessionCommand};
use crate::error::CliError;

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Chunk(a) => commands::chunk(a, out),
        Command::Session(SessionCommand::New(a)) => commands::session_new(a, out),
        Command::Ingest(a) => commands::ingest(a, out),
        Command::Estimate(a) => commands::estimate(a, out),
        Command::Report(a) => commands::report(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli, out) {
        Ok(()) => error::EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
