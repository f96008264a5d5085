//! Command-line front end: ingest chains and densities, run the solvers and
//! checks, and emit machine-readable JSON or plot-ready CSV.
//!
//! Exit codes: 0 on success, 2 when an input fails validation or a
//! computation is refused (a structured error document goes to stdout),
//! 64 on usage errors, 74 on I/O errors.

mod commands;
mod config;
mod inputs;
mod output;

use clap::error::ErrorKind;
use clap::Parser;

use commands::Cli;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(commands::run(cli));
}
