use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::std_normal_cdf;
use crate::params::{check_exponent, Params};

/// One grid node: level `y`, value `g(y)` and derivative `g'(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GNode {
    pub y: f64,
    pub g: f64,
    pub dg: f64,
}

/// Discretized solution of the g-equation on `[ε, 1 - ε]`, immutable once
/// built.
///
/// Between nodes the curve is a cubic Hermite interpolant whose node slopes
/// are the stored derivatives passed through the Fritsch–Carlson limiter, so
/// the interpolant is monotone wherever the data are.
#[derive(Debug, Clone, PartialEq)]
pub struct GCurve {
    p: f64,
    epsilon: f64,
    nodes: Vec<GNode>,
    slopes: Vec<f64>,
}

impl GCurve {
    pub fn from_nodes(p: f64, epsilon: f64, nodes: Vec<GNode>) -> Result<Self> {
        check_exponent(p)?;
        if nodes.len() < 2 {
            return Err(Error::Usage("a g-curve needs at least two nodes".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1].y > w[0].y) {
                return Err(Error::Usage(format!(
                    "g-curve grid must be strictly increasing (y = {} then {})",
                    w[0].y, w[1].y
                )));
            }
        }
        if nodes.iter().any(|n| !(n.y > 0.0 && n.y < 1.0)) {
            return Err(Error::Usage("g-curve grid must lie inside (0, 1)".into()));
        }
        if nodes.iter().any(|n| !n.g.is_finite() || !n.dg.is_finite()) {
            return Err(Error::Usage("g-curve values must be finite".into()));
        }
        let slopes = limited_slopes(&nodes);
        Ok(Self {
            p,
            epsilon,
            nodes,
            slopes,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn nodes(&self) -> &[GNode] {
        &self.nodes
    }

    /// `(g(y), g'(y))` for `y ∈ (0, 1)`.
    ///
    /// Inside the grid this is the monotone Hermite interpolant, reproducing
    /// the stored node values exactly. Beyond the grid the end value is
    /// continued linearly with the end slope and clamped to `[0, 1]`.
    pub fn eval(&self, y: f64) -> Result<(f64, f64)> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::domain("y", y, "level must lie in (0, 1)"));
        }
        Ok(self.eval_unchecked(y))
    }

    /// `g(y)` only; same contract as [`GCurve::eval`] without the domain
    /// check.
    #[inline]
    pub(crate) fn value(&self, y: f64) -> f64 {
        self.eval_unchecked(y).0
    }

    pub(crate) fn eval_unchecked(&self, y: f64) -> (f64, f64) {
        let first = self.nodes[0];
        let last = self.nodes[self.nodes.len() - 1];
        if y <= first.y {
            return ((first.g + first.dg * (y - first.y)).clamp(0.0, 1.0), first.dg);
        }
        if y >= last.y {
            return ((last.g + last.dg * (y - last.y)).clamp(0.0, 1.0), last.dg);
        }
        // first index with node.y > y; 1 <= hi <= len - 1
        let hi = self.nodes.partition_point(|n| n.y <= y);
        let lo = hi - 1;
        let a = self.nodes[lo];
        if a.y == y {
            return (a.g, a.dg);
        }
        let b = self.nodes[hi];
        let dy = b.y - a.y;
        let s = (y - a.y) / dy;
        let (ma, mb) = (self.slopes[lo], self.slopes[hi]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let g = h00 * a.g + h10 * dy * ma + h01 * b.g + h11 * dy * mb;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * s2 - 2.0 * s;
        let dg = (d00 * a.g + d01 * b.g) / dy + d10 * ma + d11 * mb;
        (g.clamp(0.0, 1.0), dg)
    }

    /// `v(T, x, c) = (1-x)^p / T^{p-1} · g(Φ(c/√T))`.
    pub fn value_function(&self, params: &Params) -> Result<f64> {
        self.check_exponent_matches(params.p)?;
        if params.x >= 1.0 {
            return Ok(0.0);
        }
        let level = std_normal_cdf(params.threshold / params.horizon.sqrt());
        let g = self.value(level);
        Ok(params.gap().powf(params.p) / params.horizon.powf(params.p - 1.0) * g)
    }

    pub(crate) fn check_exponent_matches(&self, p: f64) -> Result<()> {
        if (self.p - p).abs() <= 1e-12 * p.abs() {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "curve was calibrated for p = {} but p = {} was requested",
                self.p, p
            )))
        }
    }

    /// Worst violations of the shape properties of `g` over the grid.
    pub fn invariants(&self) -> CurveInvariants {
        let mut inv = CurveInvariants::default();
        for n in &self.nodes {
            inv.range_violation = inv
                .range_violation
                .max(-n.g)
                .max(n.g - 1.0);
            inv.max_derivative = inv.max_derivative.max(n.dg);
            inv.lower_bound_violation = inv
                .lower_bound_violation
                .max((1.0 - n.y).powf(self.p) - n.g);
        }
        for w in self.nodes.windows(2) {
            inv.max_increase = inv.max_increase.max(w[1].g - w[0].g);
        }
        let chord = |a: &GNode, b: &GNode| (b.g - a.g) / (b.y - a.y);
        for w in self.nodes.windows(3) {
            let rise = chord(&w[1], &w[2]) - chord(&w[0], &w[1]);
            inv.max_slope_increase = inv.max_slope_increase.max(rise);
        }
        inv
    }

    /// Returns a copy with `g` replaced by `f(y, g)` at every node; the
    /// derivatives are rebuilt from the new values by finite differences.
    ///
    /// Meant for perturbation studies, not for producing ODE solutions.
    pub fn map_values(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut nodes: Vec<GNode> = self
            .nodes
            .iter()
            .map(|n| GNode {
                y: n.y,
                g: f(n.y, n.g),
                dg: n.dg,
            })
            .collect();
        let len = nodes.len();
        let derivs: Vec<f64> = (0..len)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(len - 1));
                (nodes[b].g - nodes[a].g) / (nodes[b].y - nodes[a].y)
            })
            .collect();
        for (n, d) in nodes.iter_mut().zip(derivs) {
            n.dg = d;
        }
        Self::from_nodes(self.p, self.epsilon, nodes)
    }
}

/// Largest violations found by [`GCurve::invariants`]; every field is
/// non-positive up to roundoff on a valid curve except where noted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CurveInvariants {
    /// `max(-g, g - 1)`.
    pub range_violation: f64,
    /// Largest stored `g'`.
    pub max_derivative: f64,
    /// Largest rise `g_{i+1} - g_i` between neighbours.
    pub max_increase: f64,
    /// Largest increase of consecutive chord slopes (discrete concavity).
    pub max_slope_increase: f64,
    /// `max((1-y)^p - g)`.
    pub lower_bound_violation: f64,
}

impl CurveInvariants {
    /// The tolerances every calibrated curve must meet; values may stray
    /// outside `[0, 1]` by the integrator tolerance.
    pub fn holds(&self) -> bool {
        self.range_violation <= 1e-9
            && self.max_derivative <= 1e-9
            && self.max_increase <= 1e-9
            && self.max_slope_increase <= 1e-6
            && self.lower_bound_violation <= 1e-6
    }
}

/// `z^p / y^{p-1} + (1-z)^p / (1-y)^{p-1} >= 1` for `y, z ∈ (0, 1)`.
///
/// Returns the slack `lhs - 1`.
pub fn split_inequality_slack(p: f64, y: f64, z: f64) -> f64 {
    z.powf(p) / y.powf(p - 1.0) + (1.0 - z).powf(p) / (1.0 - y).powf(p - 1.0) - 1.0
}

fn limited_slopes(nodes: &[GNode]) -> Vec<f64> {
    let mut m: Vec<f64> = nodes.iter().map(|n| n.dg).collect();
    for k in 0..nodes.len() - 1 {
        let delta = (nodes[k + 1].g - nodes[k].g) / (nodes[k + 1].y - nodes[k].y);
        if delta == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let mut alpha = m[k] / delta;
        let mut beta = m[k + 1] / delta;
        if alpha < 0.0 {
            m[k] = 0.0;
            alpha = 0.0;
        }
        if beta < 0.0 {
            m[k + 1] = 0.0;
            beta = 0.0;
        }
        let r2 = alpha * alpha + beta * beta;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            m[k] = tau * alpha * delta;
            m[k + 1] = tau * beta * delta;
        }
    }
    m
}
