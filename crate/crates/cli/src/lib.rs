//! Command-line front end for the spttn planner and executor.

pub mod args;
pub mod commands;
pub mod error;
pub mod generate;
pub mod report;
pub mod tns;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use args::{Cli, Command};
pub use error::{CliError, Result};

/// Runs one invocation and returns the process exit code.
pub fn run_cli<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e);
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Optimize(a) => commands::optimize(a, out),
        Command::Explain(a) => commands::explain(a, out),
        Command::Run(a) => commands::run(a, out),
        Command::Verify(a) => commands::verify(a, out),
        Command::Bench(a) => commands::bench(a, out),
        Command::Gen(a) => commands::gen(a, out),
    }
}
