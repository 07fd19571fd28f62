use std::io;

use thiserror::Error;

/// Errors raised by the simulation and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid torus: {0}")]
    InvalidTorus(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fields live on different truncations")]
    TruncationMismatch,

    /// Non-finite coefficients after a step, usually a too-large `dt`.
    #[error("solution blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("non-finite Feynman-Kac weight at t = {time}")]
    NonFiniteWeight { time: f64 },

    /// Effective sample size fell below 2 during an ensemble sweep.
    #[error("ensemble collapse at symbol {symbol:.6} (ESS = {ess:.3})")]
    EnsembleCollapse { symbol: f64, ess: f64 },

    #[error("eigenfunction estimate is not positive ({value}) at symbol {symbol:.6}")]
    NonPositiveEigenfunction { value: f64, symbol: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u16, expected: u16 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
