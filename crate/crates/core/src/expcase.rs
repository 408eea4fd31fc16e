//! Exponential running cost `e^{λ|u|} - 1`.
//!
//! Here the target constraint is irrelevant: the constant control
//! `(1-x)⁺/T` is optimal and `w(T, x, c) = T (e^{λ(1-x)⁺/T} - 1)`. The lower
//! bound comes from the martingales with exponent
//! `ζ_t = n^{-2/3} (T + n^{-n} - t)^{1/n - 1}`, which put mass close to one
//! on `{W_T > c}` at vanishing entropy cost as `n` grows.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gaussian::std_normal_sf;
use crate::params::check_horizon;
use crate::quad;

/// Witness indices reported by default.
pub const DEFAULT_WITNESS_SEQUENCE: [u32; 5] = [4, 8, 16, 32, 64];

fn check_rate(lam: f64) -> Result<()> {
    if lam > 0.0 && lam.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("lambda", lam, "must be > 0"))
    }
}

/// `T (e^{λ(1-x)⁺/T} - 1)`; does not depend on the threshold.
pub fn exp_value(horizon: f64, x: f64, lam: f64) -> Result<f64> {
    check_horizon(horizon)?;
    check_rate(lam)?;
    if x.is_nan() {
        return Err(Error::domain("x", x, "must be a number"));
    }
    let gap = (1.0 - x).max(0.0);
    Ok(horizon * (lam * gap / horizon).exp_m1())
}

/// `(1-x)⁺/T`.
pub fn exp_optimal_control(horizon: f64, x: f64) -> Result<f64> {
    check_horizon(horizon)?;
    if x.is_nan() {
        return Err(Error::domain("x", x, "must be a number"));
    }
    Ok((1.0 - x).max(0.0) / horizon)
}

/// Trapezoid weights for `len` equispaced samples on `[0, T]`.
fn trapezoid_weight(i: usize, len: usize, horizon: f64) -> f64 {
    let dt = horizon / (len - 1) as f64;
    if i == 0 || i == len - 1 {
        0.5 * dt
    } else {
        dt
    }
}

/// Trapezoid rule for samples on an equispaced grid over `[0, T]`.
pub fn trapezoid(values: &[f64], horizon: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Usage("a profile needs at least two samples".into()));
    }
    check_horizon(horizon)?;
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, v)| trapezoid_weight(i, values.len(), horizon) * v)
        .sum())
}

/// `∫_0^T (e^{λu(t)} - 1) dt` for a deterministic rate sampled on an
/// equispaced grid, by the trapezoid rule.
pub fn exp_cost_of_profile(profile: &[f64], horizon: f64, lam: f64) -> Result<f64> {
    check_rate(lam)?;
    if let Some(&u) = profile.iter().find(|u| !(**u >= 0.0) || !u.is_finite()) {
        return Err(Error::domain("profile", u, "rates must be finite and >= 0"));
    }
    let costs: Vec<f64> = profile.iter().map(|u| (lam * u).exp_m1()).collect();
    trapezoid(&costs, horizon)
}

/// `ln(n^{-n})`. The regularizer itself underflows once `n >= 144`, so
/// everything below works with its logarithm.
pub fn log_regularizer(n: u32) -> f64 {
    let n = f64::from(n);
    -n * n.ln()
}

/// `ζ^{(n)}_t`.
pub fn zeta(n: u32, horizon: f64, t: f64) -> f64 {
    let nf = f64::from(n);
    let r = log_regularizer(n).exp();
    nf.powf(-2.0 / 3.0) * (horizon + r - t).powf(1.0 / nf - 1.0)
}

/// Diagnostics of the `n`-th witness martingale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityWitness {
    pub n: u32,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "c")]
    pub threshold: f64,
    /// `I_n = ∫_0^T ζ_t dt`.
    pub drift_integral: f64,
    /// `E[M_T 1{W_T > c}] = 1 - Φ((c - I_n)/√T)`.
    pub mass: f64,
    /// `½ ∫_0^T ζ_t² (T - t) dt`.
    pub entropy: f64,
}

impl DualityWitness {
    /// `T e^{-λx/T} exp((λ·mass - entropy)/T)`, a lower bound for
    /// `w(T, x, c) + T`.
    pub fn bound(&self, x: f64, lam: f64) -> f64 {
        let t = self.horizon;
        t * (-lam * x / t).exp() * ((lam * self.mass - self.entropy) / t).exp()
    }

    /// Relative distance `(w + T - bound)/(w + T)`.
    pub fn duality_gap(&self, x: f64, lam: f64) -> Result<f64> {
        let upper = exp_value(self.horizon, x, lam)? + self.horizon;
        Ok((upper - self.bound(x, lam)) / upper)
    }
}

/// Builds the `n`-th witness. `I_n` is integrated in closed form; the
/// entropy term by adaptive quadrature in `s = T - t`.
pub fn duality_witness(n: u32, horizon: f64, threshold: f64) -> Result<DualityWitness> {
    if n < 2 {
        return Err(Error::Usage(format!("witness index must be >= 2, got {n}")));
    }
    check_horizon(horizon)?;
    if threshold.is_nan() {
        return Err(Error::domain("c", threshold, "must be a number"));
    }
    let nf = f64::from(n);
    let log_r = log_regularizer(n);
    // (T + r)^{1/n} - r^{1/n}, with r^{1/n} = 1/n exactly
    let head = (horizon.ln() / nf + (log_r - horizon.ln()).exp().ln_1p() / nf).exp();
    let drift_integral = nf.powf(1.0 / 3.0) * (head - 1.0 / nf);
    let mass = std_normal_sf((threshold - drift_integral) / horizon.sqrt());
    let entropy = 0.5 * nf.powf(-4.0 / 3.0) * entropy_kernel(nf, log_r, horizon)?;
    Ok(DualityWitness {
        n,
        horizon,
        threshold,
        drift_integral,
        mass,
        entropy,
    })
}

/// `∫_0^T s (s + r)^{2/n - 2} ds` with `r = e^{log_r}`, integrated in
/// `u = ln s` so that `r` never has to be formed. The piece below
/// `s = r e^{-50}` is of relative size `e^{-100}` and is dropped.
fn entropy_kernel(n: f64, log_r: f64, horizon: f64) -> Result<f64> {
    const RTOL: f64 = 1e-10;
    let expo = 2.0 / n - 2.0;
    // ln(s² (s + r)^{2/n-2}) = 2u + expo·ln(e^u + e^{log_r})
    let f = |u: f64| {
        let hi = u.max(log_r);
        let log_sum = hi + (-(u - log_r).abs()).exp().ln_1p();
        (2.0 * u + expo * log_sum).exp()
    };
    let top = horizon.ln();
    let split = log_r.min(top);
    let lower = quad::integrate(f, split - 50.0, split, RTOL, 0.0)?;
    let upper = if split < top {
        quad::integrate(f, split, top, RTOL, 0.0)?
    } else {
        0.0
    };
    Ok(lower + upper)
}

/// `n^{-4/3} ∫_0^T (T-t)^{1/n - 1} dt = n^{-1/3} T^{1/n}`, the cruder
/// bound on `∫ ζ² (T - t)`.
pub fn entropy_bound(n: u32, horizon: f64) -> f64 {
    let nf = f64::from(n);
    nf.powf(-1.0 / 3.0) * horizon.powf(1.0 / nf)
}

/// One line of the witness study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessRow {
    pub witness: DualityWitness,
    pub duality_gap: f64,
}

pub fn witness_study(
    ns: &[u32],
    horizon: f64,
    x: f64,
    lam: f64,
    threshold: f64,
    exec: Execution,
) -> Result<Vec<WitnessRow>> {
    exp_value(horizon, x, lam)?;
    exec.map_indexed(ns.len(), |i| {
        let witness = duality_witness(ns[i], horizon, threshold)?;
        let duality_gap = witness.duality_gap(x, lam)?;
        Ok(WitnessRow {
            witness,
            duality_gap,
        })
    })
    .into_iter()
    .collect()
}

/// Indices `i` where the study breaks the expected trend (mass up,
/// entropy down) between rows `i` and `i + 1`.
pub fn trend_breaks(rows: &[WitnessRow]) -> Vec<usize> {
    rows.windows(2)
        .enumerate()
        .filter(|(_, w)| {
            !(w[1].witness.mass > w[0].witness.mass && w[1].witness.entropy < w[0].witness.entropy)
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn witness_csv(rows: &[WitnessRow]) -> String {
    let mut out = String::from("n,I_n,mass,entropy,duality_gap\n");
    for r in rows {
        let w = &r.witness;
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            w.n, w.drift_integral, w.mass, w.entropy, r.duality_gap
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `∫_0^T s (s+r)^{β} ds`, `β = 2/n - 2`, from the antiderivative in
    /// `v = s + r`; the `r`-only terms are formed from `ln r`.
    fn kernel_exact(n: f64, log_r: f64, t: f64) -> f64 {
        let a = 2.0 / n;
        let r = log_r.exp();
        let prim_top = (t + r).powf(a) / a - r * (t + r).powf(a - 1.0) / (a - 1.0);
        let r_a = (a * log_r).exp();
        prim_top - r_a * (1.0 / a - 1.0 / (a - 1.0))
    }

    #[test]
    fn closed_forms() {
        assert!((exp_value(1.0, 0.0, 1.0).unwrap() - 1.718_281_828_459_045).abs() < 1e-15);
        assert!((exp_value(2.0, 0.5, 2.0).unwrap() - 2.0 * (0.5f64.exp() - 1.0)).abs() < 1e-15);
        assert_eq!(exp_value(3.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(exp_value(3.0, 1.7, 1.0).unwrap(), 0.0);
        assert_eq!(exp_optimal_control(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(exp_optimal_control(2.0, 1.0).unwrap(), 0.0);
        assert!(exp_value(0.0, 0.0, 1.0).is_err());
        assert!(exp_value(1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn constant_profile_cost_is_the_value() {
        let (t, x, lam) = (2.0, 0.3, 1.5);
        let u = exp_optimal_control(t, x).unwrap();
        let cost = exp_cost_of_profile(&vec![u; 101], t, lam).unwrap();
        assert!((cost - exp_value(t, x, lam).unwrap()).abs() < 1e-14);
        assert_eq!(exp_cost_of_profile(&[0.0; 11], t, lam).unwrap(), 0.0);
        assert!(exp_cost_of_profile(&[0.1, -0.1], t, lam).is_err());
    }

    #[test]
    fn entropy_quadrature_matches_antiderivative() {
        for n in [4u32, 8, 16, 32, 64] {
            for t in [0.5, 1.0, 3.0] {
                let nf = f64::from(n);
                let got = entropy_kernel(nf, log_regularizer(n), t).unwrap();
                let want = kernel_exact(nf, log_regularizer(n), t);
                assert!(((got - want) / want).abs() < 1e-8, "n={n} T={t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn large_indices_stay_exact() {
        for n in [18u32, 143, 144, 200, 400] {
            let nf = f64::from(n);
            let w = duality_witness(n, 1.0, 0.0).unwrap();
            // (1 + r)^{1/n} = 1 to double precision for these n
            let i_exact = nf.powf(1.0 / 3.0) * (1.0 - 1.0 / nf);
            assert!((w.drift_integral - i_exact).abs() < 1e-12, "n={n}");
            let e_exact = 0.5 * nf.powf(-4.0 / 3.0) * kernel_exact(nf, log_regularizer(n), 1.0);
            assert!(((w.entropy - e_exact) / e_exact).abs() < 1e-8, "n={n}: {} vs {e_exact}", w.entropy);
        }
        assert!(log_regularizer(144).exp() == 0.0 || log_regularizer(144) < -700.0);
    }

    #[test]
    fn witness_sanity() {
        let w = duality_witness(8, 1.0, -40.0).unwrap();
        assert!(w.mass > 1.0 - 1e-12);
        let w = duality_witness(4, 1.0, 0.0).unwrap();
        assert!(w.mass > 0.0 && w.mass < 1.0 && w.entropy > 0.0);
        assert!(2.0 * w.entropy <= entropy_bound(4, 1.0));
        assert!(duality_witness(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = witness_study(&[4, 8], 1.0, 0.0, 1.0, 0.0, Execution::Sequential).unwrap();
        let csv = witness_csv(&rows);
        assert!(csv.starts_with("n,I_n,mass,entropy,duality_gap\n4,"));
        assert_eq!(csv.lines().count(), 3);
        assert!(trend_breaks(&rows).is_empty());
    }
}
