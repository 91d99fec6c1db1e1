//! Local-realist model of EPR-B coincidence experiments.
//!
//! * [`analytic`]: closed-form correlation algebra and the CHSH surface.
//! * [`sim`]: event-based source and photodetector Monte Carlo.
//! * [`coincidence`]: window pairing, correlation, CHSH and visibility estimators.
//! * [`experiments`]: configuration, sweeps and CSV output behind the `eprb` CLI.

pub mod analytic;
pub mod coincidence;
pub mod error;
pub mod experiments;
pub mod sim;

pub use error::{AnalyticError, CoincidenceError, ExperimentError, SimError};

/// Locale-free scientific notation with 17 significant digits, enough to
/// round-trip any `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}
