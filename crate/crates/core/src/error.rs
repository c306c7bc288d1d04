use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge for {what} (estimated error {estimate:e})")]
    Quadrature { what: String, estimate: f64 },

    #[error(
        "kernel {kernel} is not positive semidefinite at this resolution: \
         most negative DFT bin {most_negative:e} at index {index} (max bin {max_bin:e})"
    )]
    Factorization {
        kernel: &'static str,
        most_negative: f64,
        index: usize,
        max_bin: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trajectory diverged at step {step} ({phase})")]
    Diverged { step: usize, phase: &'static str },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ensemble failure: {diverged} of {launched} trajectories diverged")]
    EnsembleFailure { diverged: u64, launched: u64 },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
