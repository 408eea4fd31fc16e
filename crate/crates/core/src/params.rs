use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One instance `(p, T, x, c)` of the control problem.
///
/// `p > 1` is the cost exponent, `horizon` is `T > 0`, `x ∈ [0, 1]` the
/// initial position and `threshold` the level `c` in the target
/// `X_T >= 1{W_T > c}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x: f64,
    #[serde(rename = "c")]
    pub threshold: f64,
}

impl Params {
    pub fn new(p: f64, horizon: f64, x: f64, threshold: f64) -> Result<Self> {
        check_exponent(p)?;
        check_horizon(horizon)?;
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain("x", x, "x must lie in [0, 1]"));
        }
        if !threshold.is_finite() {
            return Err(Error::domain("c", threshold, "c must be finite"));
        }
        Ok(Self {
            p,
            horizon,
            x,
            threshold,
        })
    }

    /// Remaining distance `1 - x` to the target.
    pub fn gap(&self) -> f64 {
        1.0 - self.x
    }
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::domain("p", p, "p must be finite and > 1"))
    }
}

pub(crate) fn check_horizon(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::domain("T", t, "T must be finite and > 0"))
    }
}
