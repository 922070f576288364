//! Errors tagged with the process exit code they map to.

use std::fmt::Display;
use std::process::ExitCode;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn input(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_INPUT,
            error,
        }
    }

    /// Input-shaped library errors map to the usage code, the rest to failure.
    pub fn from_core(error: causal_patterns::Error) -> Self {
        use causal_patterns::Error as E;
        let code = match error {
            E::InvalidInput(_)
            | E::LengthMismatch { .. }
            | E::TooShort { .. }
            | E::InsufficientSamples { .. }
            | E::Csv(_)
            | E::Json(_) => EXIT_INPUT,
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl From<causal_patterns::Error> for CliError {
    fn from(e: causal_patterns::Error) -> Self {
        Self::from_core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            error,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Marks a failure as caused by bad input (exit code 2).
pub trait InputContext<T> {
    fn input_context<C: Display + Send + Sync + 'static>(self, context: impl FnOnce() -> C) -> CliResult<T>;
}

impl<T, E> InputContext<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn input_context<C: Display + Send + Sync + 'static>(self, context: impl FnOnce() -> C) -> CliResult<T> {
        self.map_err(|e| CliError::input(e.into().context(context())))
    }
}
