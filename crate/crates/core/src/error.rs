use std::path::PathBuf;

use thiserror::Error;

/// Which half of `(0, 1)` an ODE branch was integrated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is out of range: {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("integration diverged on the {side} branch at y = {y}")]
    Divergence { side: Side, y: f64 },

    #[error("g left [-0.01, 1.01] on the {side} branch at y = {y} (g = {g})")]
    Range { side: Side, y: f64, g: f64 },

    #[error("integrator exhausted its step budget on the {side} branch at y = {y}")]
    StepBudget { side: Side, y: f64 },

    #[error("shooting calibration failed: {0}")]
    Calibration(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("{0}")]
    Usage(String),

    #[error("malformed curve file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            expected,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
