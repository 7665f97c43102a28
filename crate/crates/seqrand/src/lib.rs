//! Experiment harness, report formats and command-line driver for the
//! `seqrand-core` aggregation library.
//!
//! [`harness`] runs Monte-Carlo excess-risk experiments against exact or
//! closed-form risks, [`report`] turns JSON experiment configs into CSV or
//! JSON tables, and [`cli`] wires both to the `seqrand` binary.

#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod harness;
pub mod report;

pub use seqrand_core as core;

/// Artifact version written into every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] seqrand_core::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    Violation(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 for a failed check, 2 for anything that stops the
    /// computation from running.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Violation(_) => 1,
            _ => 2,
        }
    }
}
