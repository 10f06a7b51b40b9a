//! Command-line front end: argument handling, reports and the self-test.
//!
//! Exit codes: 0 when the run succeeded and every check passed, 1 when an
//! inequality or agreement check failed, 2 for usage, domain, hypothesis,
//! configuration and numerical errors.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;
pub mod selftest;

use std::fs;
use std::io::Write;
use std::time::Instant;

use clap::Parser;
use fbmlab_core::Error;
use serde_json::json;

use crate::args::{Cli, Command, OutputArgs};
use crate::output::ExperimentReport;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    if let Err(e) = configure_threads() {
        eprintln!("fbmlab: {e}");
        return EXIT_ERROR;
    }
    let argv = match config::expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("fbmlab: {e}");
            return EXIT_ERROR;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fbmlab {}: {e}", cli.command.name());
            EXIT_ERROR
        }
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("FBMLAB_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("FBMLAB_THREADS must be a positive integer, got '{raw}'")))?;
    // a second call in the same process finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(cmd: &Command) -> Result<i32, Error> {
    let start = Instant::now();
    let out = cmd.output();
    let (results, pass, table) = if let Command::Selftest { seed, .. } = cmd {
        let report = selftest::run(*seed, |c, secs| eprintln!("{} [{secs:.1} s]", c.line()));
        eprintln!("selftest hash {}", report.hash);
        let pass = report.pass();
        (commands::to_value(&report), Some(pass), None)
    } else {
        let o = commands::run(cmd)?;
        eprintln!("{}", o.summary);
        (o.results, o.pass, o.table)
    };
    let config = json!({ "arguments": commands::to_value(cmd) });
    let report = ExperimentReport::new(cmd.name(), config, results, pass, start.elapsed().as_secs_f64());
    emit(&report, table.as_ref(), out)?;
    Ok(match pass {
        Some(false) => EXIT_FAIL,
        _ => EXIT_PASS,
    })
}

fn emit(report: &ExperimentReport, table: Option<&output::Table>, out: &OutputArgs) -> Result<(), Error> {
    let json = report.to_json();
    match &out.out {
        Some(path) => fs::write(path, &json).map_err(|e| Error::Usage(format!("cannot write '{}': {e}", path.display())))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(json.as_bytes())
                .map_err(|e| Error::Usage(format!("cannot write to standard output: {e}")))?;
        }
    }
    match (table, &out.csv) {
        (Some(t), Some(path)) => t.write(path),
        (None, Some(path)) => Err(Error::Usage(format!(
            "{} produces no table; remove --csv {}",
            report.command,
            path.display()
        ))),
        _ => Ok(()),
    }
}
