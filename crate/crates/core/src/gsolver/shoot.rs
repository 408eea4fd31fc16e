use serde::Serialize;

use super::{integrate_branch, integrate_g, BranchEnd, GCurve, StepControl};
use crate::error::{Error, Result};
use crate::gaussian::std_normal_pdf;
use crate::params::check_exponent;

/// Settings for [`shoot_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShootConfig {
    pub epsilon: f64,
    pub boundary_tol: f64,
    /// Search interval for `g'(1/2)`.
    pub gamma_bracket: (f64, f64),
    /// Number of trial values of `g(1/2)` scanned across `(2^{-p}, 1)` to
    /// locate sign changes of the left boundary miss.
    pub scan_points: usize,
    pub max_bisections: usize,
    pub search_control: StepControl,
    pub final_control: StepControl,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            boundary_tol: 1e-3,
            gamma_bracket: (-10.0, 0.0),
            scan_points: 16,
            max_bisections: 60,
            search_control: StepControl::search(),
            final_control: StepControl::default(),
        }
    }
}

/// A calibrated solution of the boundary-value problem.
#[derive(Debug, Clone)]
pub struct ShootingResult {
    /// `g(1/2)`.
    pub g_mid: f64,
    /// `g'(1/2)`.
    pub gamma: f64,
    pub curve: GCurve,
    /// `|g(ε) - 1|`.
    pub left_residual: f64,
    /// `|g(1 - ε)|`.
    pub right_residual: f64,
    /// Every `(g_mid, gamma)` pair that met both boundary tolerances; more
    /// than one means the bracketing found distinct solutions.
    pub alternatives: Vec<(f64, f64)>,
}

impl ShootingResult {
    pub fn ambiguous(&self) -> bool {
        self.alternatives.len() > 1
    }

    /// Slope of `c ↦ g(Φ(c))` at `c = 0`, i.e. `g'(1/2) φ(0)`: the
    /// derivative of `v(1, 0, c)` in the threshold.
    pub fn threshold_slope(&self) -> f64 {
        self.gamma * std_normal_pdf(0.0)
    }
}

/// Diagnostics collected while bracketing, reported on failure.
#[derive(Debug, Default, Serialize)]
struct Trace {
    scanned: Vec<(f64, Option<f64>, &'static str)>,
}

pub fn shoot(p: f64, epsilon: f64, boundary_tol: f64) -> Result<ShootingResult> {
    shoot_with(
        p,
        &ShootConfig {
            epsilon,
            boundary_tol,
            ..ShootConfig::default()
        },
    )
}

/// Nested bisection: for each trial `g(1/2)` the inner loop finds the
/// `g'(1/2)` whose right branch lands on `ε^p ≈ 0` at `1 - ε`; the outer loop moves
/// `g(1/2)` until the left branch lands on `1` at `ε`.
pub fn shoot_with(p: f64, cfg: &ShootConfig) -> Result<ShootingResult> {
    check_exponent(p)?;
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 0.1) {
        return Err(Error::domain(
            "epsilon",
            cfg.epsilon,
            "cutoff must lie in (0, 0.1)",
        ));
    }
    if !(cfg.boundary_tol > 0.0) {
        return Err(Error::domain(
            "boundary_tol",
            cfg.boundary_tol,
            "tolerance must be > 0",
        ));
    }
    let shooter = Shooter { p, cfg };

    // Scan g(1/2) over (2^{-p}, 1) for sign changes of the left miss.
    let lo = 0.5f64.powf(p);
    let hi = 1.0;
    let points = cfg.scan_points.max(2);
    let mut trace = Trace::default();
    let mut samples = Vec::with_capacity(points + 1);
    for i in 0..=points {
        let frac = i as f64 / points as f64;
        let g_mid = (lo + (hi - lo) * frac).clamp(lo * (1.0 + 1e-12), 1.0 - 1e-12);
        let probe = shooter.left_miss(g_mid);
        trace.scanned.push((
            g_mid,
            probe.as_ref().ok().map(|m| m.gamma),
            match &probe {
                Ok(m) if m.over => "over",
                Ok(_) => "under",
                Err(_) => "no gamma",
            },
        ));
        samples.push((g_mid, probe));
    }

    let mut found = Vec::new();
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if let (Ok(ma), Ok(mb)) = (&a.1, &b.1) {
            if !ma.over && mb.over {
                found.push(shooter.refine(a.0, b.0)?);
            }
        }
    }
    if found.is_empty() {
        return Err(Error::Calibration(format!(
            "no sign change of g(ε) - 1 for g(1/2) in [{lo}, 1] with g'(1/2) in {:?}; scan: {}",
            cfg.gamma_bracket,
            serde_json::to_string(&trace.scanned).unwrap_or_default()
        )));
    }

    let mut validated = Vec::new();
    let mut last_err = None;
    for (g_mid, gamma) in found {
        match shooter.finish(g_mid, gamma) {
            Ok(res) => validated.push(res),
            Err(e) => last_err = Some(e),
        }
    }
    if validated.is_empty() {
        return Err(last_err.expect("at least one bracket was refined"));
    }
    let alternatives: Vec<(f64, f64)> = validated.iter().map(|r| (r.g_mid, r.gamma)).collect();
    let mut best = validated.swap_remove(0);
    best.alternatives = alternatives;
    Ok(best)
}

struct LeftMiss {
    gamma: f64,
    over: bool,
}

struct Shooter<'a> {
    p: f64,
    cfg: &'a ShootConfig,
}

impl Shooter<'_> {
    /// `true` when the right branch ends at or above `ε^p`, the smallest
    /// value compatible with `g(y) >= (1-y)^p`.
    fn right_high(&self, g_mid: f64, gamma: f64) -> Result<bool> {
        let target = self.cfg.epsilon.powf(self.p);
        match integrate_branch(
            self.p,
            g_mid,
            gamma,
            1.0 - self.cfg.epsilon,
            &self.cfg.search_control,
            None,
        ) {
            BranchEnd::Reached { g, .. } => Ok(g >= target),
            BranchEnd::Escaped { high, .. } | BranchEnd::Diverged { high, .. } => Ok(high),
            BranchEnd::StepBudget { y } => Err(Error::Calibration(format!(
                "right branch ran out of steps at y = {y} (g_mid = {g_mid}, gamma = {gamma})"
            ))),
        }
    }

    /// `true` when the left branch ends above `1`.
    fn left_over(&self, g_mid: f64, gamma: f64) -> Result<bool> {
        match integrate_branch(
            self.p,
            g_mid,
            gamma,
            self.cfg.epsilon,
            &self.cfg.search_control,
            None,
        ) {
            BranchEnd::Reached { g, .. } => Ok(g > 1.0),
            BranchEnd::Escaped { high, .. } | BranchEnd::Diverged { high, .. } => Ok(high),
            BranchEnd::StepBudget { y } => Err(Error::Calibration(format!(
                "left branch ran out of steps at y = {y} (g_mid = {g_mid}, gamma = {gamma})"
            ))),
        }
    }

    /// Inner loop: the `gamma` whose right branch reaches `ε^p` (within
    /// `boundary_tol` of the limit `0`) at `1 - ε`, taken from the high side.
    fn gamma_for(&self, g_mid: f64) -> Result<f64> {
        let (mut low, mut high) = self.cfg.gamma_bracket;
        if !self.right_high(g_mid, high)? || self.right_high(g_mid, low)? {
            return Err(Error::Calibration(format!(
                "g(1 - ε) does not change sign for g'(1/2) in {:?} at g(1/2) = {g_mid}",
                self.cfg.gamma_bracket
            )));
        }
        for _ in 0..self.cfg.max_bisections {
            let mid = 0.5 * (low + high);
            if mid <= low || mid >= high {
                break;
            }
            if self.right_high(g_mid, mid)? {
                high = mid;
            } else {
                low = mid;
            }
        }
        Ok(high)
    }

    fn left_miss(&self, g_mid: f64) -> Result<LeftMiss> {
        let gamma = self.gamma_for(g_mid)?;
        let over = self.left_over(g_mid, gamma)?;
        Ok(LeftMiss { gamma, over })
    }

    /// Outer loop between an under-shooting and an over-shooting `g(1/2)`;
    /// returns the under-shooting end so that `g <= 1` on the grid.
    fn refine(&self, mut under: f64, mut over: f64) -> Result<(f64, f64)> {
        for _ in 0..self.cfg.max_bisections {
            let mid = 0.5 * (under + over);
            if mid <= under || mid >= over {
                break;
            }
            if self.left_miss(mid)?.over {
                over = mid;
            } else {
                under = mid;
            }
        }
        Ok((under, self.gamma_for(under)?))
    }

    fn finish(&self, g_mid: f64, gamma: f64) -> Result<ShootingResult> {
        let curve = integrate_g(
            self.p,
            g_mid,
            gamma,
            self.cfg.epsilon,
            &self.cfg.final_control,
        )
        .map_err(|e| Error::Calibration(format!("final integration failed: {e}")))?;
        let nodes = curve.nodes();
        let left_residual = (nodes[0].g - 1.0).abs();
        let right_residual = nodes[nodes.len() - 1].g.abs();
        if left_residual > self.cfg.boundary_tol || right_residual > self.cfg.boundary_tol {
            return Err(Error::Calibration(format!(
                "boundary residuals {left_residual:e} (left) / {right_residual:e} (right) exceed {} \
                 at g(1/2) = {g_mid}, g'(1/2) = {gamma}",
                self.cfg.boundary_tol
            )));
        }
        Ok(ShootingResult {
            g_mid,
            gamma,
            curve,
            left_residual,
            right_residual,
            alternatives: Vec::new(),
        })
    }
}
