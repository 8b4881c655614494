//! Command failures and their process exit codes.

use std::fmt;

use nvcav_core::Error as CoreError;

/// Malformed input, failed validation, or an I/O problem.
pub const EXIT_INPUT: u8 = 1;
/// The inputs are well formed but admit no answer (flat scan, zero field,
/// non-unique steady state, ...).
pub const EXIT_DEGENERATE: u8 = 2;
pub const EXIT_NONCONVERGENCE: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, message: message.into() }
    }

    pub fn degenerate(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DEGENERATE, message: message.into() }
    }

    pub fn nonconvergence(message: impl Into<String>) -> Self {
        CliError { code: EXIT_NONCONVERGENCE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Domain(_) | CoreError::InvalidInput(_) | CoreError::Coverage(_) | CoreError::Configuration(_) => EXIT_INPUT,
            CoreError::DegenerateField(_)
            | CoreError::DegenerateRegion(_)
            | CoreError::DivisionDegenerate(_)
            | CoreError::NoResonance { .. }
            | CoreError::NonUniqueSteadyState { .. } => EXIT_DEGENERATE,
            CoreError::FitNonConvergence { .. } => EXIT_NONCONVERGENCE,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::input(e.to_string())
    }
}

/// Prefixes an error message with where it happened, keeping the exit code.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> Result<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn context(self, what: impl fmt::Display) -> Result<T> {
        self.map_err(|e| {
            let e = e.into();
            CliError { code: e.code, message: format!("{what}: {}", e.message) }
        })
    }
}
