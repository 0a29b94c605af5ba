//! Batch front end for `maxclass-core`: TOML jobs in, JSON reports and CSV
//! profiles out.

pub mod commands;
pub mod job;
pub mod report;

use std::fmt;

pub use commands::{run, Command, Invocation, Outcome};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

/// An error with a module-qualified code and the exit status it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub exit: u8,
    /// Source excerpt with a caret under the offending position.
    pub diagnostic: Option<String>,
}

impl CliError {
    pub fn input(code: &str, message: String) -> CliError {
        CliError {
            code: code.into(),
            message,
            exit: EXIT_INPUT,
            diagnostic: None,
        }
    }

    /// A core error raised while parsing `source`.
    pub fn expr(e: maxclass_core::Error, source: &str) -> CliError {
        let offset = match &e {
            maxclass_core::Error::Syntax { offset, .. } => Some(*offset),
            maxclass_core::Error::UndeclaredVariable { offset, .. } => Some(*offset),
            _ => None,
        };
        let mut err = CliError::from(e);
        err.diagnostic = offset.map(|o| caret(source, o));
        err
    }
}

impl From<maxclass_core::Error> for CliError {
    fn from(e: maxclass_core::Error) -> CliError {
        CliError {
            code: e.code().into(),
            message: e.to_string(),
            exit: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT },
            diagnostic: None,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)?;
        if let Some(d) = &self.diagnostic {
            write!(f, "\n{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for CliError {}

/// `source` on one line and a caret under byte `offset` on the next.
pub fn caret(source: &str, offset: usize) -> String {
    let column = source.char_indices().take_while(|(i, _)| *i < offset).count();
    format!("  | {source}\n  | {}^", " ".repeat(column))
}
