//! Command-line front end for `ramvid`: dataset generation, training,
//! sampling, evaluation, canned task presets and the unconditional-rate
//! sweep.
//!
//! [`run`] is the whole program; the binary only forwards its arguments and
//! standard streams. Exit codes: 0 success, 1 usage or configuration error,
//! 2 runtime failure.

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub mod args;
pub mod commands;
pub mod pipeline;
pub mod report;
pub mod settings;

use args::{Cli, Command};
use settings::{usage, Failure, Outcome, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Caps the worker threads used for parallel sampling and training.
pub const THREADS_ENV: &str = "RAMVID_THREADS";

pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };

    let threads = match std::env::var(THREADS_ENV) {
        Err(_) => None,
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Some(n),
            _ => {
                let _ = writeln!(err, "error: {THREADS_ENV} must be a positive integer, got '{v}'");
                return EXIT_USAGE;
            }
        },
    };

    // Output is buffered so the command can run inside a dedicated pool.
    let mut out_buf = Vec::new();
    let mut err_buf = Vec::new();
    let result = match threads {
        None => dispatch(&cli.command, &mut out_buf, &mut err_buf),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, &mut out_buf, &mut err_buf)),
            Err(e) => Err(Failure::Runtime(e.into())),
        },
    };
    let _ = out.write_all(&out_buf);
    let _ = err.write_all(&err_buf);
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(command: &Command, out: &mut Vec<u8>, err: &mut Vec<u8>) -> Outcome {
    let (settings, print_config) = resolve(command)?;
    if print_config {
        write!(out, "{}", settings.key_values())?;
        return Ok(());
    }
    match command {
        Command::GenData(_) => commands::gen_data::run(&settings, out),
        Command::Train(_) => commands::train::run(&settings, out, err),
        Command::Sample(_) => commands::sample::run(&settings, out),
        Command::Eval(a) => {
            if a.inputs.is_empty() {
                return Err(usage("eval needs at least one input container"));
            }
            commands::eval::run(&settings, &a.inputs, out)
        }
        Command::Preset(a) => commands::preset::run(&a.name, &settings, out),
        Command::SweepPu(_) => commands::sweep::run(&settings, out, err),
    }
}

fn resolve(command: &Command) -> Outcome<(Settings, bool)> {
    Ok(match command {
        Command::GenData(a) => (commands::gen_data::settings(a)?, a.common.print_config),
        Command::Train(a) => (commands::train::settings(a)?, a.common.print_config),
        Command::Sample(a) => (commands::sample::settings(a)?, a.common.print_config),
        Command::Eval(a) => (commands::eval::settings(a)?, a.common.print_config),
        Command::Preset(a) => (commands::preset::settings(a)?, a.common.print_config),
        Command::SweepPu(a) => (commands::sweep::settings(a)?, a.common.print_config),
    })
}
