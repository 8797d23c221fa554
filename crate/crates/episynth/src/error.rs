//! Crate-wide error type and model diagnostics.

use std::fmt;

use thiserror::Error;

/// A single structural finding about a model or environment.
///
/// Validation never aborts on the first problem; callers receive the full
/// list and decide whether to proceed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Which invariant or rule was violated, e.g. `"seriality"`.
    pub code: &'static str,
    /// Human-readable description including a witness where available.
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("invalid model:\n{}", format_diags(.0))]
    Model(Vec<Diagnostic>),

    #[error("{0}")]
    Usage(String),

    #[error("unsupported scheme {0}: perfect-recall strategy spaces are infinite objects and are not enumerable here; use top, ii-ir-sc, ii-ir-nsc, pi-ir-sc or pi-ir-nsc")]
    UnsupportedScheme(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Process exit code this error maps to: 2 for refusals, 3 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnsupportedScheme(_) | Error::Budget(_) => 2,
            _ => 3,
        }
    }
}

fn format_diags(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
