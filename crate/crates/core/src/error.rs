use alloc::string::String;

use thiserror::Error;

/// Errors raised by the core estimators and bound evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("NaN input in {0}")]
    NaN(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate posterior: all prior mass annihilated")]
    DegeneratePosterior,
    #[error("degenerate posterior at step {0}: all prior mass annihilated")]
    DegenerateAtStep(usize),
    #[error("unknown cell {0}")]
    UnknownCell(u64),
    #[error("substitution search failed at step {0}: no grid point dominates the mixture")]
    SubstitutionFailed(usize),
    #[error("constraint `{0}` violated")]
    Constraint(&'static str),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
