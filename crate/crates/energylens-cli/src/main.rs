//! `energylens` — generate profiling data, fit interpretable energy models
//! and baselines, evaluate and compare them, rank serving configurations,
//! and search for closed-form energy structure, all from the command line.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags or config keys),
//! 1 for runtime errors (I/O, bad data, failed fits).

mod args;
mod commands;
mod config;
mod errors;
mod manifest;

use clap::Parser;

fn main() {
    let cli = args::Cli::parse();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
