//! Batch front end for the reaction-diffusion delay toolbox: flat-file
//! experiment configs in, deterministic CSV/SVG artifacts out.

pub mod commands;
pub mod config;
pub mod emit;
pub mod inputs;

use rd_core::RdError;

/// Progress lines go through this instead of `println!` so that a closed
/// stdout (e.g. piping into `head`) ends the process quietly instead of
/// panicking with a broken-pipe backtrace.
#[macro_export]
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if writeln!(std::io::stdout(), $($arg)*).is_err() {
            std::process::exit(0);
        }
    }};
}

/// Failure taxonomy mirrored in the process exit code: configuration
/// problems exit 2, numerical or I/O failures 3, verification-bound
/// violations 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(RdError),
    Io(String),
    Bound(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) | Self::Io(_) => 3,
            Self::Bound(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "config error: {msg}"),
            Self::Numeric(err) => write!(f, "numerical failure: {err}"),
            Self::Io(msg) => write!(f, "io failure: {msg}"),
            Self::Bound(msg) => write!(f, "bound violation: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<RdError> for CliError {
    fn from(err: RdError) -> Self {
        Self::Numeric(err)
    }
}
