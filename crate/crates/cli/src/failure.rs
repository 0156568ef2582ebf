use std::fmt;

use edmc_core::io::FormatError;
use edmc_core::Error;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn parse(path: &std::path::Path, err: FormatError) -> Self {
        let message = if err.line == 0 {
            format!("{}: {}", path.display(), err.message)
        } else {
            format!("{}: line {}: {}", path.display(), err.line, err.message)
        };
        Self {
            code: EXIT_PARSE,
            message,
        }
    }

    pub fn not_converged(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NOT_CONVERGED,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Library errors raised by argument values are usage errors; numerical
/// breakdowns count as solver failures.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NumericalFailure(_) | Error::RankDeficientRetraction { .. } | Error::LineSearchFailure { .. } => {
                EXIT_NOT_CONVERGED
            }
            _ => EXIT_USAGE,
        };
        let message = match &e {
            Error::EmptySample(detail) => format!("EmptySample: {detail}"),
            other => other.to_string(),
        };
        Self { code, message }
    }
}
