//! Command-line interface. `run` returns the process exit code: 0 success,
//! 1 solver failure, 2 usage or validation error, 3 I/O error.

pub mod args;
pub mod bench;
pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::Parser;

use args::{Cli, Command};

/// Worker threads for parallel sweeps: `SPECSURV_THREADS` if set, else the
/// available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("SPECSURV_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run(argv: impl IntoIterator<Item = OsString>) -> i32 {
    let argv = match config::merge(argv.into_iter().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => commands::run_fit(a),
        Command::Evaluate(a) => commands::run_evaluate(a),
        Command::Simulate(a) => commands::run_simulate(a),
        Command::BiasCheck(a) => commands::run_bias_check(a),
        Command::Bench(a) => bench::run_bench(a).map(|_| ()),
        Command::RhoSweep(a) => commands::run_rho_sweep(a, worker_threads()),
        Command::BenchCell(a) => bench::run_cell(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
