//! Command-line front end for the moving-polyhedron analyses.
//!
//! Exit codes: 0 success, 1 input error, 2 empty constraint set, 3 solver
//! limit, 4 enumeration guard exceeded.

pub mod args;
pub mod commands;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Outcome;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_GUARD: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] movepoly_core::Error),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use movepoly_core::Error as E;
        match self {
            CliError::Input(_) | CliError::Io(_) => EXIT_INPUT,
            CliError::Core(e) => match e {
                E::InfeasibleSet { .. } => EXIT_INFEASIBLE,
                E::SolverFailure(_) | E::NoSamples(_) => EXIT_SOLVER,
                E::GuardExceeded { .. } => EXIT_GUARD,
                _ => EXIT_INPUT,
            },
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(Outcome, Option<&std::path::Path>), CliError> {
    Ok(match &cli.command {
        Command::Project(a) => (commands::cmd_project(a)?, a.common.out.as_deref()),
        Command::Multipliers(a) => (commands::cmd_multipliers(a)?, a.common.out.as_deref()),
        Command::CheckRcrcq(c) => (commands::cmd_check_rcrcq(c)?, c.out.as_deref()),
        Command::CheckLiminf(c) => (commands::cmd_check_liminf(c)?, c.out.as_deref()),
        Command::Estimate(c) => (commands::cmd_estimate(c)?, c.out.as_deref()),
        Command::Blowup(a) => (commands::cmd_blowup(a)?, a.common.out.as_deref()),
        Command::Scenarios(a) => (commands::cmd_scenarios(a)?, a.out.as_deref()),
    })
}

/// Parse `argv`, run the command and return the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let shown = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{shown}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{shown}");
                    EXIT_INPUT
                }
            };
        }
    };
    let result = dispatch(&cli).and_then(|(outcome, out)| {
        match out {
            Some(path) => std::fs::write(path, &outcome.body)?,
            None => stdout.write_all(outcome.body.as_bytes())?,
        }
        Ok(outcome.exit)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
