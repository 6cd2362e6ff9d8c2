//! `strcgp`: simulate, fit, predict, diagnose and benchmark robust state-space GPs.
//!
//! Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O error.

mod args;
mod bench;
mod config;
mod diagnose;
mod error;
mod fit;
mod output;
mod predict;
mod simulate;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Diagnose(a) => diagnose::run(a),
        Command::Bench(a) => bench::run(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
