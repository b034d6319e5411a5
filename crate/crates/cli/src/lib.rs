//! Command-line front end: argument parsing, configuration and the
//! pipeline commands.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use args::Cli;
pub use error::{ErrorClass, Failure};

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => config::FileConfig::load(path)?,
        None => config::FileConfig::default(),
    };
    commands::run(cli.command, &file)
}
