//! Error type shared by every module of the crate.

use thiserror::Error;

/// Broad classification of an [`Error`], used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The caller supplied invalid input (dimensions, ranges, malformed data).
    Input,
    /// A computation overflowed, diverged or failed to converge.
    Numeric,
    /// The requested operation is not supported for the given model or family.
    Capability,
    /// An internal invariant was violated.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("set cover unreachable: best achievable coverage {achievable} of {required} required samples")]
    CoverageUnreachable { achievable: usize, required: usize },

    #[error("at t={t}: {source}")]
    AtStep {
        t: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    pub(crate) fn at_step(self, t: usize) -> Self {
        Error::AtStep { t, source: Box::new(self) }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Input(_) => ErrorClass::Input,
            Error::Numeric(_) | Error::CoverageUnreachable { .. } => ErrorClass::Numeric,
            Error::Capability(_) => ErrorClass::Capability,
            Error::Invariant(_) => ErrorClass::Internal,
            Error::AtStep { source, .. } => source.class(),
        }
    }
}

/// Checks that `value` is a finite number, naming it in the error otherwise.
pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be finite, got {value}")))
    }
}
