//! Command-line harness for the pdilqr solver: benchmark solves, standalone LQR
//! solves and randomized back-end cross-checks.
//!
//! Exit codes are fixed:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (`solve`: converged) |
//! | 1 | iteration limit reached |
//! | 2 | line search failed |
//! | 3 | regularization limit or LQR factorization failure |
//! | 4 | usage, input or I/O error |
//! | 5 | `check` found a comparison beyond tolerance |

pub mod args;
pub mod commands;
pub mod format;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;
use pdilqr::sqp::SolveStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Exit {
    Success = 0,
    MaxIterations = 1,
    LineSearchFailure = 2,
    RegularizationFailure = 3,
    Usage = 4,
    CheckFailed = 5,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }
}

impl From<SolveStatus> for Exit {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => Exit::Success,
            SolveStatus::MaxIterations => Exit::MaxIterations,
            SolveStatus::LineSearchFailure => Exit::LineSearchFailure,
            SolveStatus::RegularizationFailure => Exit::RegularizationFailure,
        }
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{}", e.render());
            return Exit::Success;
        }
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return Exit::Usage;
        }
    };
    match cli.command {
        args::Command::Solve(a) => commands::cmd_solve(&a, out, err),
        args::Command::Lqr(a) => commands::cmd_lqr(&a, out, err),
        args::Command::Check(a) => commands::cmd_check(&a, out, err),
    }
}
