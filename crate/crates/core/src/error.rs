//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong inside the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Configuration text could not be parsed at all.
    #[error("failed to parse config: {0}")]
    ConfigParse(String),

    /// A strategy name not present in the registry.
    #[error("unknown strategy `{name}` (available: {available})")]
    UnknownStrategy { name: String, available: String },

    /// Two values that must share a shape do not.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    /// An input that must be non-empty is empty.
    #[error("{context} must not be empty")]
    Empty { context: String },

    /// A value outside its documented domain.
    #[error("invalid argument for {context}: {reason}")]
    Invalid { context: String, reason: String },

    /// A computation produced NaN or infinity.
    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    /// A malformed IDX data file.
    #[error("bad IDX file `{path}`: {reason}")]
    Idx { path: String, reason: String },

    /// An underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn shape(
        context: impl Into<String>,
        expected: impl Into<String>,
        got: impl Into<String>,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn empty(context: impl Into<String>) -> Self {
        Error::Empty {
            context: context.into(),
        }
    }

    pub fn invalid(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            context: context.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input (config or CLI arguments)
    /// rather than failures while running. The CLI maps validation errors to
    /// exit code 1 and everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::ConfigParse(_) | Error::UnknownStrategy { .. }
        )
    }
}
