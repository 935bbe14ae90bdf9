//! `semshield` command-line front end.

mod args;
mod commands;
mod failure;

use std::process::ExitCode;

use clap::Parser;
use semshield_core::Error;

use args::{Cli, Command};

const THREADS_VAR: &str = "SEMSHIELD_THREADS";

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return failure::report_usage(&e.render().to_string()),
    };

    let (name, outcome) = match &cli.command {
        Command::Fit(a) => ("fit", configure_threads().and_then(|_| commands::fit(a))),
        Command::Detect(a) => ("detect", configure_threads().and_then(|_| commands::detect(a))),
        Command::Bench(a) => ("bench", configure_threads().and_then(|_| commands::bench_cmd(a))),
        Command::Gen(a) => ("gen", configure_threads().and_then(|_| commands::gen(a))),
        Command::Score(a) => ("score", configure_threads().and_then(|_| commands::score(a))),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        // Downstream reader closed early, e.g. `semshield score ... | head`.
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => failure::report(name, &e),
    }
}
