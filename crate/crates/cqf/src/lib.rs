//! File formats, reports and the command-line front end for `cqf-core`.

pub mod cli;
pub mod commands;
pub mod error;
pub mod model_file;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use crate::cli::Cli;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let env = env_logger::Env::default().default_filter_or(level);
    // Tests may run several commands in one process; keep the first logger.
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args`, runs the command, writes the report and returns the exit
/// code. The report goes to `--out` when given, else to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    init_logging(cli.verbose);
    let report = commands::execute(&cli);
    let text = report.to_json();
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &text)
            .map_err(|e| format!("cannot write report to {}: {e}", path.display())),
        None => stdout
            .write_all(text.as_bytes())
            .and_then(|()| stdout.flush())
            .map_err(|e| format!("cannot write report: {e}")),
    };
    match written {
        Ok(()) => report.exit_code,
        Err(msg) => {
            log::error!("{msg}");
            1
        }
    }
}
