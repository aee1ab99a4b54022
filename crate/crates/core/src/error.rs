use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent input parameters. `key` names the offending setting.
    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("failed to load mesh {path}: {message}")]
    MeshLoad { path: PathBuf, message: String },

    /// A geometric defect in a specific cell (non-closed, inverted, degenerate).
    #[error("invalid cell {cell}: {message}")]
    InvalidCell { cell: usize, message: String },

    /// A property evaluated outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Both phases immobile: fractional flow undefined.
    #[error("zero total mobility (both phases immobile)")]
    ZeroMobility,

    #[error("singular linear system: {0}")]
    Singular(String),

    /// A nonlinear stage failed to converge; the driver reacts by cutting the time step.
    #[error("{stage} did not converge: {message}")]
    StepFailure {
        stage: &'static str,
        message: String,
    },

    #[error("time step {dt:e} s fell below the minimum {min_dt:e} s at t = {time:e} s")]
    TimeStepUnderflow { dt: f64, min_dt: f64, time: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn step_failure(stage: &'static str, message: impl Into<String>) -> Self {
        Error::StepFailure {
            stage,
            message: message.into(),
        }
    }

    /// True for failures the driver may recover from by retrying with a shorter step.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            Error::StepFailure { .. } | Error::Domain(_) | Error::ZeroMobility | Error::Singular(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
