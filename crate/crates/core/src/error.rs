use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("source variant must be 0 or 1, got {0}")]
    InvalidVariant(u8),
    #[error("excess factor must be finite and > 0, got {0}")]
    InvalidExcessFactor(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("emission rate must be finite and > 0, got {0}")]
    InvalidRate(f64),
    #[error("pulse length must be finite and > 0, got {0}")]
    InvalidPulseLength(f64),
    #[error("duration must be finite and >= 0, got {0}")]
    InvalidDuration(f64),
    #[error("detection efficiency must lie in (0, 1], got {0}")]
    InvalidEfficiency(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoincidenceError {
    #[error("coincidence window must be finite and > 0, got {0}")]
    InvalidWindow(f64),
    #[error("{side} stream is not sorted by time at index {index}")]
    Unsorted { side: &'static str, index: usize },
    #[error("run {run} has no coincidences; correlation undefined")]
    EmptyRun { run: usize },
    #[error("visibility needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("visibility undefined: all coincidence rates are zero")]
    AllZeroRates,
    #[error("window list must be non-empty, ascending and positive")]
    BadWindowList,
    #[error("angle grid must be non-empty")]
    EmptyGrid,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Coincidence(#[from] CoincidenceError),
}

impl ExperimentError {
    /// Short machine-readable category used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "config",
            ExperimentError::Io { .. } => "io",
            ExperimentError::Analytic(_) => "analytic",
            ExperimentError::Sim(_) => "sim",
            ExperimentError::Coincidence(_) => "coincidence",
        }
    }
}
