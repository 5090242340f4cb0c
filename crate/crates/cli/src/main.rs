//! `cagekit` command-line front end.

mod cli;
mod commands;
mod error;
mod io;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::error::{CliError, Result};

fn init(cli: &Cli) -> Result<()> {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init(&cli)?;
    let seed = cli.seed;
    match cli.command {
        Command::Cage(a) => commands::cage::run(&a),
        Command::Coords(a) => commands::coords::run(&a),
        Command::Map(a) => commands::map::run(&a),
        Command::Features(a) => commands::features::run(&a),
        Command::Overfit(a) => commands::overfit::run(&a),
        Command::TrainSkin(a) => commands::skin::train(&a, seed),
        Command::EvalSkin(a) => commands::skin::eval(&a),
        Command::Lbs(a) => commands::skin::lbs(&a),
        Command::Soup(a) => commands::soup::run(&a, seed.unwrap_or(0)),
        Command::Fixtures(a) => commands::fixtures::run(&a, seed.unwrap_or(0)),
        Command::Report(a) => commands::report::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
