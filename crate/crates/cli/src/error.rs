//! Command failures and their process exit codes.

use smpnn::Error;

/// Exit codes of the `smpnn` binary.
pub mod code {
    pub const OK: u8 = 0;
    /// Any failure not covered below.
    pub const RUNTIME: u8 = 1;
    /// Unknown subcommand or flag, missing flag value.
    pub const USAGE: u8 = 2;
    /// An input file is missing or unreadable, or an output cannot be written.
    pub const IO: u8 = 3;
    /// A configuration value is missing, unparsable or out of range.
    pub const INVALID_VALUE: u8 = 4;
    /// An input file is malformed or inconsistent with the others.
    pub const MALFORMED_INPUT: u8 = 5;
    /// The command ran but its check did not pass.
    pub const CHECK_FAILED: u8 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => code::CHECK_FAILED,
            CliError::Core(e) => match e {
                Error::Io { .. } => code::IO,
                Error::InvalidArgument(_) => code::INVALID_VALUE,
                Error::Parse { .. }
                | Error::Inconsistent(_)
                | Error::NodeOutOfRange { .. }
                | Error::ConflictingWeight { .. }
                | Error::DuplicateNode(_)
                | Error::LabelOutOfRange { .. } => code::MALFORMED_INPUT,
                _ => code::RUNTIME,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            code::IO => "io",
            code::INVALID_VALUE => "invalid_value",
            code::MALFORMED_INPUT => "malformed_input",
            code::CHECK_FAILED => "check_failed",
            _ => "runtime",
        }
    }
}

/// The single machine-parsable line printed to stderr on failure.
pub fn error_line(kind: &str, code: u8, msg: &str) -> String {
    let flat: Vec<&str> = msg
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    format!("error kind={kind} code={code}: {}", flat.join(" "))
}

pub type CliResult<T> = std::result::Result<T, CliError>;
