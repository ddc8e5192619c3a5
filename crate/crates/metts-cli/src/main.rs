//! Thermal-state sampling experiments on 1D Bose-Hubbard chains, driven by
//! a TOML config file. Exit codes: 1 config error, 2 numerical error,
//! 3 I/O error.

mod config;
mod error;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Thermal-state sampling for 1D Bose-Hubbard chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the run described by a config file.
    Run {
        /// Path to the TOML config.
        config: PathBuf,
        /// Override sampling.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override output.path from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Usage mistakes are config errors in this tool's exit vocabulary, so
    // do not let clap exit with its default status of 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Command::Run { config, seed, output } = cli.command;
    match config::load(&config, seed, output).and_then(|cfg| run::dispatch(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
