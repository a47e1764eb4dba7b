mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;

use ccmscreen_core::ErrorKind;

use crate::args::Cli;

/// 0 success, 1 usage or config, 2 data, 3 numerical, 4 internal.
fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Internal => 4,
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::apply_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("ccmscreen: usage error: {}", e.0);
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("ccmscreen: usage error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ccmscreen: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
