//! Shooting solver for the normalized value function `g` on `(0, 1)`.
//!
//! `g` solves
//!
//! ```text
//! h(y) g''(y) + (p - 1) (g(y) - g(y)^{p/(p-1)}) = 0,   g(0+) = 1,  g(1-) = 0,
//! ```
//!
//! with `h(y) = exp(-Φ⁻¹(y)²) / 4π`. Because `h` vanishes at both ends the
//! boundary conditions are imposed at `ε` and `1 - ε`, and the equation is
//! integrated outward from `y = 1/2` where it is regular.

mod curve;
mod io;
mod shoot;

pub use curve::{split_inequality_slack, CurveInvariants, GCurve, GNode};
pub use io::{load_shooting_result, save_shooting_result, Sidecar};
pub use shoot::{shoot, shoot_with, ShootConfig, ShootingResult};

use crate::error::{Error, Result, Side};
use crate::gaussian::h_unchecked;
use crate::ode::{dopri5, Halt, Tolerances};
use crate::params::check_exponent;

/// Outside this band a branch is declared out of range.
pub const RANGE_LOW: f64 = -0.01;
pub const RANGE_HIGH: f64 = 1.01;
/// Runaway thresholds for `|g|` and `|g'|`.
pub const DIVERGENCE_G: f64 = 2.0;
pub const DIVERGENCE_DG: f64 = 1e6;

/// Step-size control for [`integrate_g`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub atol: f64,
    pub rtol: f64,
    /// Absolute cap on the step in `y`.
    pub max_step: f64,
    /// Cap on the step as a fraction of the distance to the nearer endpoint
    /// of `(0, 1)`; `1/h` grows superexponentially there.
    pub endpoint_fraction: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    /// Dense grid suitable for interpolation and residual checks.
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-9,
            max_step: 2.5e-4,
            endpoint_fraction: 0.01,
            max_steps: 1_000_000,
        }
    }
}

impl StepControl {
    /// Same tolerances with loose step caps, for the many trial integrations
    /// made while shooting.
    pub fn search() -> Self {
        Self {
            max_step: 0.05,
            endpoint_fraction: 0.25,
            max_steps: 200_000,
            ..Self::default()
        }
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances {
            atol: self.atol,
            rtol: self.rtol,
        }
    }
}

/// Right-hand side `g'' = -(p-1)(g - max(g,0)^{p/(p-1)}) / h(y)`.
#[inline]
pub(crate) fn second_derivative(p: f64, y: f64, g: f64) -> f64 {
    -(p - 1.0) * nonlinearity(p, g) / h_unchecked(y)
}

/// `g - max(g, 0)^{p/(p-1)}`, evaluated sign-safely.
#[inline]
pub(crate) fn nonlinearity(p: f64, g: f64) -> f64 {
    let pos = g.max(0.0);
    let power = if p == 2.0 {
        pos * pos
    } else {
        pos.powf(p / (p - 1.0))
    };
    g - power
}

/// How a single outward branch ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum BranchEnd {
    Reached { g: f64, dg: f64 },
    /// Left `[RANGE_LOW, RANGE_HIGH]`; `high` tells which side.
    Escaped { y: f64, g: f64, high: bool },
    Diverged { y: f64, high: bool },
    StepBudget { y: f64 },
}

enum Stop {
    Range { y: f64, g: f64 },
    Diverged { y: f64, high: bool },
}

pub(crate) fn integrate_branch(
    p: f64,
    g_mid: f64,
    gamma: f64,
    end: f64,
    ctrl: &StepControl,
    mut nodes: Option<&mut Vec<GNode>>,
) -> BranchEnd {
    let rhs = |y: f64, s: &[f64; 2]| [s[1], second_derivative(p, y, s[0])];
    let cap = |y: f64| ctrl.max_step.min(ctrl.endpoint_fraction * y.min(1.0 - y));
    let result = dopri5(
        rhs,
        0.5,
        end,
        [g_mid, gamma],
        ctrl.tolerances(),
        ctrl.max_steps,
        cap,
        |acc| {
            let [g, dg] = acc.state;
            if !g.is_finite() || !dg.is_finite() || g.abs() > DIVERGENCE_G || dg.abs() > DIVERGENCE_DG
            {
                let high = if g.is_finite() && g.abs() > DIVERGENCE_G {
                    g > 0.0
                } else {
                    // Heading toward the endpoint: a steep climb means high.
                    (dg > 0.0) == (end > 0.5)
                };
                return Err(Stop::Diverged { y: acc.t, high });
            }
            if !(RANGE_LOW..=RANGE_HIGH).contains(&g) {
                return Err(Stop::Range { y: acc.t, g });
            }
            if let Some(out) = nodes.as_deref_mut() {
                out.push(GNode { y: acc.t, g, dg });
            }
            Ok(())
        },
    );
    match result {
        Ok(acc) => BranchEnd::Reached {
            g: acc.state[0],
            dg: acc.state[1],
        },
        Err(Halt::Observer(Stop::Range { y, g })) => BranchEnd::Escaped {
            y,
            g,
            high: g > RANGE_HIGH,
        },
        Err(Halt::Observer(Stop::Diverged { y, high })) => BranchEnd::Diverged { y, high },
        Err(Halt::StepBudget { t }) | Err(Halt::StepUnderflow { t }) => {
            BranchEnd::StepBudget { y: t }
        }
    }
}

fn check_cutoff(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 0.1 {
        Ok(())
    } else {
        Err(Error::domain("epsilon", epsilon, "cutoff must lie in (0, 0.1)"))
    }
}

/// Integrates the g-equation outward from `y = 1/2` with initial data
/// `g(1/2) = g_mid`, `g'(1/2) = gamma` down to `ε` and up to `1 - ε`.
pub fn integrate_g(
    p: f64,
    g_mid: f64,
    gamma: f64,
    epsilon: f64,
    ctrl: &StepControl,
) -> Result<GCurve> {
    check_exponent(p)?;
    check_cutoff(epsilon)?;
    if !(g_mid > 0.0 && g_mid < 1.0) {
        return Err(Error::domain("g_mid", g_mid, "g(1/2) must lie in (0, 1)"));
    }
    if !gamma.is_finite() {
        return Err(Error::domain("gamma", gamma, "g'(1/2) must be finite"));
    }

    let mut left = Vec::new();
    let end = integrate_branch(p, g_mid, gamma, epsilon, ctrl, Some(&mut left));
    branch_result(end, Side::Left)?;
    let mut right = Vec::new();
    let end = integrate_branch(p, g_mid, gamma, 1.0 - epsilon, ctrl, Some(&mut right));
    branch_result(end, Side::Right)?;

    left.reverse();
    left.pop(); // y = 1/2 also heads the right branch
    left.extend(right);
    GCurve::from_nodes(p, epsilon, left)
}

fn branch_result(end: BranchEnd, side: Side) -> Result<()> {
    match end {
        BranchEnd::Reached { .. } => Ok(()),
        BranchEnd::Escaped { y, g, .. } => Err(Error::Range { side, y, g }),
        BranchEnd::Diverged { y, .. } => Err(Error::Divergence { side, y }),
        BranchEnd::StepBudget { y } => Err(Error::StepBudget { side, y }),
    }
}

/// ODE residuals `h g'' + (p-1)(g - g^{p/(p-1)})` at interior grid nodes.
///
/// `g''` is the five-point divided-difference derivative of the stored `g'`
/// values (fourth order on the nonuniform grid), so the check does not
/// reuse the right-hand side it is verifying. The two outermost nodes at
/// each end are skipped.
pub fn ode_residuals(curve: &GCurve) -> Vec<(f64, f64)> {
    let p = curve.p();
    curve
        .nodes()
        .windows(5)
        .map(|w| {
            let centre = w[2];
            let xs = [w[0].y, w[1].y, w[2].y, w[3].y, w[4].y];
            let weights = first_derivative_weights(centre.y, &xs);
            let g2: f64 = weights.iter().zip(w).map(|(c, n)| c * n.dg).sum();
            let r = h_unchecked(centre.y) * g2 + (p - 1.0) * nonlinearity(p, centre.g);
            (centre.y, r)
        })
        .collect()
}

/// Fornberg weights for the first derivative at `at` from values at `xs`.
fn first_derivative_weights(at: f64, xs: &[f64; 5]) -> [f64; 5] {
    const N: usize = 5;
    // c[j][k]: weight of node j for the k-th derivative, k = 0, 1.
    let mut c = [[0.0f64; 2]; N];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - at;
    c[0][0] = 1.0;
    for i in 1..N {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - at;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    let mut out = [0.0; N];
    for (o, row) in out.iter_mut().zip(c) {
        *o = row[1];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_one_is_a_fixed_point() {
        for p in [1.5, 2.0, 3.0] {
            assert_eq!(nonlinearity(p, 1.0), 0.0);
            for y in [1e-3, 0.2, 0.5, 0.9] {
                assert_eq!(second_derivative(p, y, 1.0), 0.0);
            }
        }
        // g ≡ 1 integrates without moving.
        let end = integrate_branch(2.0, 1.0, 0.0, 1e-4, &StepControl::search(), None);
        assert_eq!(end, BranchEnd::Reached { g: 1.0, dg: 0.0 });
    }

    #[test]
    fn steep_gamma_escapes_high_on_the_left() {
        let err = integrate_g(2.0, 0.88, -5.0, 1e-4, &StepControl::default()).unwrap_err();
        match err {
            Error::Range { side, g, y } => {
                assert_eq!(side, Side::Left);
                assert!(g > RANGE_HIGH);
                assert!(y > 1e-4 && y < 0.5);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fornberg_weights_differentiate_quartics_exactly() {
        let xs = [0.1, 0.13, 0.2, 0.21, 0.35];
        let w = first_derivative_weights(0.2, &xs);
        let f = |x: f64| 3.0 * x.powi(4) - x.powi(3) + 2.0 * x - 1.0;
        let df = |x: f64| 12.0 * x.powi(3) - 3.0 * x.powi(2) + 2.0;
        let est: f64 = w.iter().zip(xs).map(|(c, x)| c * f(x)).sum();
        assert!((est - df(0.2)).abs() < 1e-10, "{est} vs {}", df(0.2));
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = StepControl::default();
        assert!(integrate_g(1.0, 0.5, -0.5, 1e-4, &c).is_err());
        assert!(integrate_g(2.0, 1.0, -0.5, 1e-4, &c).is_err());
        assert!(integrate_g(2.0, 0.5, -0.5, 0.5, &c).is_err());
        assert!(integrate_g(2.0, 0.5, -0.5, 0.0, &c).is_err());
        assert!(integrate_g(2.0, 0.5, f64::NAN, 1e-4, &c).is_err());
    }

    #[test]
    fn published_initial_data_fall_short_of_the_left_boundary() {
        // g(1/2) = 0.88 with g'(1/2) = -0.21 is incompatible with a concave g
        // reaching 1 at 0: concavity caps g(0) at 0.88 + 0.21/2 = 0.985.
        let curve = integrate_g(2.0, 0.88, -0.21, 1e-4, &StepControl::default()).unwrap();
        let first = curve.nodes()[0];
        assert!(first.g < 0.985, "{first:?}");
        let last = curve.nodes().last().unwrap();
        assert!(last.g >= 0.0);
    }
}
