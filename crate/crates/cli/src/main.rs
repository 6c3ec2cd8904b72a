mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

/// Exit status for usage, parse and I/O errors.
pub(crate) const EXIT_USAGE: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DRLCHECK_LOG")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    ExitCode::from(commands::run(&cli))
}

/// Exit status for an error that aborted a command.
pub(crate) fn error_status(err: &anyhow::Error) -> u8 {
    use drlcheck::Error;
    match err.downcast_ref::<Error>() {
        Some(
            Error::SolverUnknown(_)
            | Error::SearchFloor(_)
            | Error::NonMonotone(_)
            | Error::OracleLimit(_)
            | Error::NoInvariant(_),
        ) => 2,
        _ => EXIT_USAGE,
    }
}
