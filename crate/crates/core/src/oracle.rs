//! Dynamic programming on a scaled random walk.
//!
//! Brownian motion on `[0, T]` is replaced by `n` steps of `±√Δt` with
//! probability `1/2`. At every node the controller chooses the fraction `a`
//! of the remaining gap `1 - x` to close during the next step, paying
//! `(a (1-x))^p / Δt^{p-1}`. Homogeneity in the gap gives
//! `v(t_k, x, node) = (1-x)^p ψ(k, j)` with
//!
//! ```text
//! ψ(k, j) = min_a  a^p Δt^{1-p} + (1-a)^p E[ψ(k+1, child)]
//! ```
//!
//! and `ψ(n, j) = ∞` where the terminal walk value meets the threshold.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gaussian::quantile_unchecked;
use crate::params::{check_exponent, check_horizon};

/// Which terminal walk values count as "constraint binds".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    /// `W_n >= c` binds (upper-biases the cost).
    #[default]
    Conservative,
    /// Only `W_n > c` binds.
    Strict,
}

/// `min_{a ∈ [0,1]} a^p κ₁ + (1-a)^p κ₂`, returned as `(a*, cost)`.
///
/// `κ₂ = ∞` forces `a* = 1`.
pub fn inner_min(kappa1: f64, kappa2: f64, p: f64) -> Result<(f64, f64)> {
    if !(kappa1 > 0.0) {
        return Err(Error::domain("kappa1", kappa1, "must be > 0"));
    }
    if !(kappa2 >= 0.0) {
        return Err(Error::domain("kappa2", kappa2, "must be >= 0 or infinite"));
    }
    check_exponent(p)?;
    Ok(inner_min_unchecked(kappa1, kappa2, p))
}

#[inline]
fn inner_min_unchecked(k1: f64, k2: f64, p: f64) -> (f64, f64) {
    if k2 == f64::INFINITY {
        return (1.0, k1);
    }
    if k2 == 0.0 {
        return (0.0, 0.0);
    }
    if p == 2.0 {
        return (k2 / (k1 + k2), k1 * k2 / (k1 + k2));
    }
    // ρ = (κ₂/κ₁)^{1/(p-1)}, a* = ρ/(1+ρ), cost = (κ₁^{-q} + κ₂^{-q})^{1-p}
    let q = 1.0 / (p - 1.0);
    let (s1, s2) = (k1.powf(-q), k2.powf(-q));
    let a = s1 / (s1 + s2);
    (a, (s1 + s2).powf(1.0 - p))
}

struct Lattice {
    n: usize,
    p: f64,
    kappa1: f64,
    /// `c / √Δt`, compared against the integer walk position `2j - n`.
    threshold_steps: f64,
    tie: TieRule,
}

impl Lattice {
    fn new(n: usize, horizon: f64, threshold: f64, p: f64, tie: TieRule) -> Result<Self> {
        if n < 2 {
            return Err(Error::Usage(format!("lattice needs n >= 2 steps, got {n}")));
        }
        check_horizon(horizon)?;
        check_exponent(p)?;
        if !threshold.is_finite() {
            return Err(Error::domain("c", threshold, "must be finite"));
        }
        let dt = horizon / n as f64;
        let kappa1 = dt.powf(1.0 - p);
        if !kappa1.is_finite() || kappa1 == 0.0 {
            return Err(Error::Resource(format!(
                "Δt^(1-p) = {kappa1:e} is not representable for n = {n}, T = {horizon}, p = {p}"
            )));
        }
        Ok(Self {
            n,
            p,
            kappa1,
            threshold_steps: threshold * (n as f64).sqrt() / horizon.sqrt(),
            tie,
        })
    }

    fn terminal(&self, j: usize) -> f64 {
        let pos = (2 * j) as f64 - self.n as f64;
        let binds = match self.tie {
            TieRule::Conservative => pos >= self.threshold_steps,
            TieRule::Strict => pos > self.threshold_steps,
        };
        if binds {
            f64::INFINITY
        } else {
            0.0
        }
    }

    /// Overwrites `next[0..=k]` with layer `k` computed from layer `k+1`.
    fn step(&self, next: &mut [f64], k: usize) {
        for j in 0..=k {
            let expect = 0.5 * (next[j] + next[j + 1]);
            next[j] = inner_min_unchecked(self.kappa1, expect, self.p).1;
        }
    }
}

/// `ψ(0, origin)`, the lattice estimate of `v(T, 0, c)`.
pub fn dp_value(n: usize, horizon: f64, threshold: f64, p: f64) -> Result<f64> {
    dp_value_with(n, horizon, threshold, p, TieRule::default())
}

pub fn dp_value_with(n: usize, horizon: f64, threshold: f64, p: f64, tie: TieRule) -> Result<f64> {
    let lat = Lattice::new(n, horizon, threshold, p, tie)?;
    let mut psi: Vec<f64> = (0..=n).map(|j| lat.terminal(j)).collect();
    for k in (0..n).rev() {
        lat.step(&mut psi, k);
    }
    Ok(psi[0])
}

/// The full triangle `ψ(k, j)`, `0 <= j <= k <= n`.
#[derive(Debug, Clone)]
pub struct OracleTable {
    pub n: usize,
    pub horizon: f64,
    pub threshold: f64,
    pub p: f64,
    pub tie: TieRule,
    psi: Vec<Vec<f64>>,
}

impl OracleTable {
    pub fn build(n: usize, horizon: f64, threshold: f64, p: f64, tie: TieRule) -> Result<Self> {
        let lat = Lattice::new(n, horizon, threshold, p, tie)?;
        let mut psi = vec![Vec::new(); n + 1];
        psi[n] = (0..=n).map(|j| lat.terminal(j)).collect();
        for k in (0..n).rev() {
            let mut layer = psi[k + 1].clone();
            lat.step(&mut layer, k);
            layer.truncate(k + 1);
            psi[k] = layer;
        }
        Ok(Self {
            n,
            horizon,
            threshold,
            p,
            tie,
            psi,
        })
    }

    /// `ψ(k, j)`; `∞` where the target can no longer be avoided.
    pub fn psi(&self, k: usize, j: usize) -> f64 {
        self.psi[k][j]
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        &self.psi[k]
    }

    /// Walk value at node `(k, j)`.
    pub fn walk(&self, k: usize, j: usize) -> f64 {
        let dt = self.horizon / self.n as f64;
        ((2 * j) as f64 - k as f64) * dt.sqrt()
    }

    /// `v(t_k, x, node) = (1-x)^p ψ(k, j)`.
    pub fn value(&self, k: usize, j: usize, x: f64) -> f64 {
        let gap = (1.0 - x).max(0.0);
        if gap == 0.0 {
            return 0.0;
        }
        gap.powf(self.p) * self.psi(k, j)
    }
}

/// `g(y) ≈ ψ(0, origin)` on the unit horizon with `c = Φ⁻¹(y)`, one
/// lattice per level.
pub fn dp_g_profile(
    n: usize,
    p: f64,
    levels: &[f64],
    tie: TieRule,
    exec: Execution,
) -> Result<Vec<(f64, f64)>> {
    if let Some(&y) = levels.iter().find(|&&y| !(y > 0.0 && y < 1.0)) {
        return Err(Error::domain("level", y, "must lie in (0, 1)"));
    }
    exec.map_indexed(levels.len(), |i| {
        let y = levels[i];
        dp_value_with(n, 1.0, quantile_unchecked(y), p, tie).map(|g| (y, g))
    })
    .into_iter()
    .collect()
}

/// `count` evenly spaced levels from `a` to `b` inclusive.
pub fn level_grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..count)
            .map(|i| a + (b - a) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

pub fn profile_to_csv(profile: &[(f64, f64)]) -> String {
    let mut out = String::from("y,g_dp\n");
    for (y, g) in profile {
        let _ = writeln!(out, "{y:.16e},{g:.16e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(k1: f64, k2: f64, p: f64, m: usize) -> (f64, f64) {
        (0..=m)
            .map(|i| {
                let a = i as f64 / m as f64;
                (a, a.powf(p) * k1 + (1.0 - a).powf(p) * k2)
            })
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap()
    }

    #[test]
    fn inner_min_examples() {
        assert_eq!(inner_min(1.0, 1.0, 2.0).unwrap(), (0.5, 0.5));
        assert_eq!(inner_min(2.0, 0.0, 3.0).unwrap(), (0.0, 0.0));
        assert_eq!(inner_min(2.5, f64::INFINITY, 1.5).unwrap(), (1.0, 2.5));
        let (a, cost) = inner_min(1.0, 3.0, 2.0).unwrap();
        let (ba, bcost) = brute(1.0, 3.0, 2.0, 1_000_000);
        assert!((a - 0.75).abs() < 1e-15 && (cost - 0.75).abs() < 1e-15);
        assert!((a - ba).abs() < 1e-6 && (cost - bcost).abs() < 1e-12);
    }

    #[test]
    fn inner_min_general_exponent_matches_brute_force() {
        for p in [1.5, 3.0] {
            let (a, cost) = inner_min(0.7, 4.0, p).unwrap();
            let (ba, bcost) = brute(0.7, 4.0, p, 1_000_000);
            assert!((a - ba).abs() < 1e-6, "p={p}: {a} vs {ba}");
            assert!((cost - bcost).abs() < 1e-9, "p={p}: {cost} vs {bcost}");
        }
    }

    #[test]
    fn inner_min_rejects_bad_kappa() {
        assert!(matches!(inner_min(0.0, 1.0, 2.0), Err(Error::Domain { .. })));
        assert!(inner_min(1.0, -1.0, 2.0).is_err());
    }

    #[test]
    fn far_thresholds() {
        let n = 400;
        for p in [1.5, 2.0, 3.0] {
            let low = dp_value(n, 2.0, -10.0 * 2f64.sqrt(), p).unwrap();
            assert!((low - 2f64.powf(1.0 - p)).abs() < 1e-12, "p={p}: {low}");
            assert!(dp_value(n, 2.0, 10.0 * 2f64.sqrt(), p).unwrap() < 1e-15);
        }
    }

    #[test]
    fn rolling_buffer_matches_table() {
        let t = OracleTable::build(60, 1.3, 0.2, 2.5, TieRule::Conservative).unwrap();
        assert_eq!(t.psi(0, 0), dp_value(60, 1.3, 0.2, 2.5).unwrap());
        for k in 0..=60 {
            let layer = t.layer(k);
            assert_eq!(layer.len(), k + 1);
            assert!(layer.iter().all(|&v| v >= 0.0));
            assert!(layer.windows(2).all(|w| w[1] >= w[0]), "k={k}");
        }
        assert_eq!(t.value(0, 0, 1.0), 0.0);
        assert!((t.value(0, 0, 0.5) - 0.5f64.powf(2.5) * t.psi(0, 0)).abs() < 1e-15);
    }

    #[test]
    fn tie_rule_matters_only_on_lattice_hits() {
        // c = 0 and even n: the middle node sits on the threshold
        let a = dp_value_with(200, 1.0, 0.0, 2.0, TieRule::Conservative).unwrap();
        let b = dp_value_with(200, 1.0, 0.0, 2.0, TieRule::Strict).unwrap();
        assert!(a > b);
        // odd n: no node on the threshold
        let a = dp_value_with(201, 1.0, 0.0, 2.0, TieRule::Conservative).unwrap();
        let b = dp_value_with(201, 1.0, 0.0, 2.0, TieRule::Strict).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn profile_levels_validated() {
        let e = dp_g_profile(10, 2.0, &[0.5, 1.0], TieRule::Conservative, Execution::Sequential);
        assert!(e.is_err());
        assert_eq!(level_grid(0.1, 0.9, 9).len(), 9);
        assert!((level_grid(0.1, 0.9, 9)[4] - 0.5).abs() < 1e-15);
    }
}
