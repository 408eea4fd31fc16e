//! Brownian paths, the optimal feedback control and the BSDE residual.
//!
//! The feedback law is `dX/dt = κ(M_t) (1 - X_t)/(T - t)` with gain
//! `κ = g^{1/(p-1)}`. The gain is frozen at its left-endpoint value on each
//! step and the linear equation is then solved exactly, so
//! `1 - X_{k+1} = (1 - X_k) ((T - t_{k+1})/(T - t_k))^κ`, and the cost of the
//! step is the exact integral of `u^p` along that solution. On the last step
//! the state is driven to `1` at constant speed on paths that end above the
//! threshold and left alone otherwise.
//!
//! Randomness: path `i` draws its increments from `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)` on stream `i`; normals come from the ziggurat
//! sampler of `rand_distr::StandardNormal`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gaussian::{std_normal_cdf, std_normal_pdf};
use crate::gsolver::GCurve;
use crate::params::{check_exponent, check_horizon, Params};

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform grid `t_k = k T / n`, with the per-step quantities every path
/// shares.
#[derive(Debug, Clone)]
struct Grid {
    n: usize,
    dt: f64,
    /// `T - t_k`, `k = 0..=n`.
    remaining: Vec<f64>,
    /// `ln((T - t_{k+1})/(T - t_k))`, `k = 0..n-1`; `-∞` on the last step.
    log_ratio: Vec<f64>,
}

impl Grid {
    fn new(horizon: f64, n: usize) -> Result<Self> {
        check_horizon(horizon)?;
        if n < 2 {
            return Err(Error::Usage(format!("need at least 2 time steps, got {n}")));
        }
        let dt = horizon / n as f64;
        let remaining = (0..=n).map(|k| (n - k) as f64 * dt).collect();
        let log_ratio = (0..n)
            .map(|k| ((n - k - 1) as f64 / (n - k) as f64).ln())
            .collect();
        Ok(Self {
            n,
            dt,
            remaining,
            log_ratio,
        })
    }

    fn time(&self, k: usize) -> f64 {
        if k == self.n {
            self.dt * self.n as f64
        } else {
            k as f64 * self.dt
        }
    }
}

/// Time grid and Brownian increments of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub horizon: f64,
    pub times: Vec<f64>,
    pub dw: Vec<f64>,
    pub w: Vec<f64>,
    pub seed: u64,
    pub index: u64,
}

impl BrownianPath {
    pub fn n_steps(&self) -> usize {
        self.dw.len()
    }
}

/// Path number 0 of the family generated by `seed`.
pub fn simulate_brownian(horizon: f64, n_steps: usize, seed: u64) -> Result<BrownianPath> {
    simulate_brownian_indexed(horizon, n_steps, seed, 0)
}

pub fn simulate_brownian_indexed(
    horizon: f64,
    n_steps: usize,
    seed: u64,
    index: u64,
) -> Result<BrownianPath> {
    let grid = Grid::new(horizon, n_steps)?;
    let sd = grid.dt.sqrt();
    let mut rng = path_rng(seed, index);
    let dw: Vec<f64> = (0..n_steps)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut w = Vec::with_capacity(n_steps + 1);
    w.push(0.0);
    for (k, d) in dw.iter().enumerate() {
        w.push(w[k] + d);
    }
    Ok(BrownianPath {
        horizon,
        times: (0..=n_steps).map(|k| grid.time(k)).collect(),
        dw,
        w,
        seed,
        index,
    })
}

/// A feedback gain `κ(y)` applied at martingale level `y`.
pub trait FeedbackGain: Sync {
    fn p(&self) -> f64;
    fn gain(&self, level: f64) -> f64;
}

/// `κ = g^{1/(p-1)}`, the optimal gain.
#[derive(Debug, Clone, Copy)]
pub struct OptimalGain<'a> {
    curve: &'a GCurve,
    power: f64,
}

impl<'a> OptimalGain<'a> {
    pub fn new(curve: &'a GCurve) -> Self {
        Self {
            curve,
            power: 1.0 / (curve.p() - 1.0),
        }
    }
}

#[inline]
fn root(g: f64, power: f64) -> f64 {
    if power == 1.0 {
        g
    } else {
        g.powf(power)
    }
}

impl FeedbackGain for OptimalGain<'_> {
    fn p(&self) -> f64 {
        self.curve.p()
    }

    #[inline]
    fn gain(&self, level: f64) -> f64 {
        root(self.curve.value(level), self.power)
    }
}

/// `clamp(g + η 1{lo <= y <= hi}, 0, 1)^{1/(p-1)}`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedGain<'a> {
    curve: &'a GCurve,
    power: f64,
    pub eta: f64,
    pub lo: f64,
    pub hi: f64,
}

impl<'a> PerturbedGain<'a> {
    pub fn new(curve: &'a GCurve, eta: f64, lo: f64, hi: f64) -> Self {
        Self {
            curve,
            power: 1.0 / (curve.p() - 1.0),
            eta,
            lo,
            hi,
        }
    }
}

impl FeedbackGain for PerturbedGain<'_> {
    fn p(&self) -> f64 {
        self.curve.p()
    }

    fn gain(&self, level: f64) -> f64 {
        let mut g = self.curve.value(level);
        if (self.lo..=self.hi).contains(&level) {
            g = (g + self.eta).clamp(0.0, 1.0);
        }
        root(g, self.power)
    }
}

/// `(1 - e^{aL})/a`, continuous through `a = 0`.
#[inline]
fn decay_integral(a: f64, log_ratio: f64) -> f64 {
    if a.abs() < 1e-12 {
        -log_ratio
    } else {
        -(a * log_ratio).exp_m1() / a
    }
}

struct Step {
    level: f64,
    u: f64,
    x_next: f64,
    cost: f64,
}

struct Driver<'a, G> {
    gain: &'a G,
    params: Params,
    grid: Grid,
    include_terminal_cost: bool,
}

impl<'a, G: FeedbackGain> Driver<'a, G> {
    fn new(gain: &'a G, params: &Params, n_steps: usize, include_terminal_cost: bool) -> Result<Self> {
        if (gain.p() - params.p).abs() > 1e-12 * params.p {
            return Err(Error::Usage(format!(
                "gain was built for p = {} but p = {} was requested",
                gain.p(),
                params.p
            )));
        }
        Ok(Self {
            gain,
            params: *params,
            grid: Grid::new(params.horizon, n_steps)?,
            include_terminal_cost,
        })
    }

    #[inline]
    fn level(&self, k: usize, w: f64) -> f64 {
        std_normal_cdf((self.params.threshold - w) / self.grid.remaining[k].sqrt())
    }

    #[inline]
    fn step(&self, k: usize, w: f64, x: f64, w_next: f64) -> Step {
        let p = self.params.p;
        let level = self.level(k, w);
        let gap = 1.0 - x;
        if k + 1 == self.grid.n {
            if w_next > self.params.threshold && gap > 0.0 {
                let dt = self.grid.dt;
                let cost = if self.include_terminal_cost {
                    gap.powf(p) * dt.powf(1.0 - p)
                } else {
                    0.0
                };
                return Step {
                    level,
                    u: gap / dt,
                    x_next: 1.0,
                    cost,
                };
            }
            return Step {
                level,
                u: 0.0,
                x_next: x,
                cost: 0.0,
            };
        }
        if gap <= 0.0 {
            return Step {
                level,
                u: 0.0,
                x_next: x,
                cost: 0.0,
            };
        }
        let kappa = self.gain.gain(level);
        let rem = self.grid.remaining[k];
        let log_ratio = self.grid.log_ratio[k];
        let u = kappa * gap / rem;
        let x_next = 1.0 - gap * (kappa * log_ratio).exp();
        // u(t)^p = u_k^p ((T-t)/(T-t_k))^{p(κ-1)} along the frozen-gain solution
        let a = p * (kappa - 1.0) + 1.0;
        let up = if p == 2.0 { u * u } else { u.powf(p) };
        Step {
            level,
            u,
            x_next,
            cost: up * rem * decay_integral(a, log_ratio),
        }
    }
}

/// A path with the feedback control applied.
///
/// `u[k]` is the control at the start of step `k`; `m[n]` is the terminal
/// indicator `1{W_T < c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub brownian: BrownianPath,
    pub m: Vec<f64>,
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub cost: Vec<f64>,
}

impl SimPath {
    pub fn n_steps(&self) -> usize {
        self.brownian.n_steps()
    }

    pub fn total_cost(&self) -> f64 {
        self.cost[self.cost.len() - 1]
    }

    /// `X_T >= 1{W_T > c}`, `X <= 1`, `X` non-decreasing, `u >= 0`.
    pub fn is_feasible(&self, threshold: f64) -> bool {
        let n = self.n_steps();
        let binds = self.brownian.w[n] > threshold;
        feasible(&self.x, &self.u, binds)
    }
}

fn feasible(x: &[f64], u: &[f64], binds: bool) -> bool {
    let last = x[x.len() - 1];
    (!binds || last >= 1.0)
        && x.iter().all(|&v| v <= 1.0)
        && x.windows(2).all(|w| w[1] >= w[0])
        && u.iter().all(|&v| v >= 0.0)
}

fn check_path(params: &Params, path: &BrownianPath) -> Result<()> {
    if (path.horizon - params.horizon).abs() > 1e-12 * params.horizon {
        return Err(Error::Usage(format!(
            "path horizon {} does not match T = {}",
            path.horizon, params.horizon
        )));
    }
    Ok(())
}

/// Applies the optimal feedback control along `path`.
pub fn run_optimal_control(curve: &GCurve, params: &Params, path: &BrownianPath) -> Result<SimPath> {
    run_feedback(&OptimalGain::new(curve), params, path, true)
}

pub fn run_feedback<G: FeedbackGain>(
    gain: &G,
    params: &Params,
    path: &BrownianPath,
    include_terminal_cost: bool,
) -> Result<SimPath> {
    check_path(params, path)?;
    let n = path.n_steps();
    let driver = Driver::new(gain, params, n, include_terminal_cost)?;
    let mut m = Vec::with_capacity(n + 1);
    let mut u = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n + 1);
    let mut cost = Vec::with_capacity(n + 1);
    x.push(params.x);
    cost.push(0.0);
    for k in 0..n {
        let s = driver.step(k, path.w[k], x[k], path.w[k + 1]);
        m.push(s.level);
        u.push(s.u);
        x.push(s.x_next);
        cost.push(cost[k] + s.cost);
    }
    m.push(if path.w[n] < params.threshold { 1.0 } else { 0.0 });
    Ok(SimPath {
        brownian: path.clone(),
        m,
        u,
        x,
        cost,
    })
}

/// The explicit form of the optimal control,
/// `û_t = (1-x) κ_t/(T-t) · exp(-∫_0^t κ_s/(T-s) ds)`, with the gain read
/// off the path's own martingale levels (so piecewise constant). Returned for
/// steps `0..n-1`; the last step is the completion rule, not the feedback law.
pub fn explicit_control<G: FeedbackGain>(gain: &G, params: &Params, path: &SimPath) -> Result<Vec<f64>> {
    let grid = Grid::new(params.horizon, path.n_steps())?;
    let mut integral: f64 = 0.0;
    let mut out = Vec::with_capacity(grid.n - 1);
    for k in 0..grid.n - 1 {
        let kappa = gain.gain(path.m[k]);
        out.push((1.0 - params.x) * kappa / grid.remaining[k] * (-integral).exp());
        integral -= kappa * grid.log_ratio[k];
    }
    Ok(out)
}

pub fn path_to_csv(path: &SimPath) -> String {
    let n = path.n_steps();
    let mut out = String::from("t,W,M,u,X,cost_running\n");
    for k in 0..=n {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            path.brownian.times[k],
            path.brownian.w[k],
            path.m[k],
            path.u[k.min(n - 1)],
            path.x[k],
            path.cost[k]
        );
    }
    out
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = xs.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }

    /// Estimate of `E[b - a]` from paired samples.
    pub fn paired_difference(a: &[f64], b: &[f64]) -> Self {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        Self::from_samples(&diff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub include_terminal_cost: bool,
    pub exec: Execution,
}

impl McConfig {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            include_terminal_cost: true,
            exec: Execution::default(),
        }
    }
}

/// Per-path costs in path order, plus the number of infeasible paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCosts {
    pub costs: Vec<f64>,
    pub feasibility_violations: usize,
}

impl PathCosts {
    pub fn estimate(&self) -> Estimate {
        Estimate::from_samples(&self.costs)
    }
}

/// Runs `cfg.n_paths` controlled paths without storing them.
pub fn mc_path_costs<G: FeedbackGain>(gain: &G, params: &Params, cfg: &McConfig) -> Result<PathCosts> {
    let driver = Driver::new(gain, params, cfg.n_steps, cfg.include_terminal_cost)?;
    let sd = driver.grid.dt.sqrt();
    let per_path = cfg.exec.map_indexed(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, i as u64);
        let (mut w, mut x, mut total) = (0.0, params.x, 0.0);
        let mut ok = true;
        for k in 0..cfg.n_steps {
            let w_next = w + sd * rng.sample::<f64, _>(StandardNormal);
            let s = driver.step(k, w, x, w_next);
            ok &= s.u >= 0.0 && s.x_next >= x && s.x_next <= 1.0;
            total += s.cost;
            w = w_next;
            x = s.x_next;
        }
        ok &= w <= params.threshold || x >= 1.0;
        (total, ok)
    });
    let feasibility_violations = per_path.iter().filter(|r| !r.1).count();
    Ok(PathCosts {
        costs: per_path.into_iter().map(|r| r.0).collect(),
        feasibility_violations,
    })
}

/// Summary of a Monte Carlo cost run, also the `simulate` JSON report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimSummary {
    pub params: Params,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub mean_cost: f64,
    pub stderr: f64,
    pub feasibility_violations: usize,
}

/// Mean and standard error of the cost of the optimal control.
pub fn mc_cost_estimate(curve: &GCurve, params: &Params, cfg: &McConfig) -> Result<SimSummary> {
    let costs = mc_path_costs(&OptimalGain::new(curve), params, cfg)?;
    let est = costs.estimate();
    Ok(SimSummary {
        params: *params,
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        seed: cfg.seed,
        mean_cost: est.mean,
        stderr: est.stderr,
        feasibility_violations: costs.feasibility_violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsdeConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    /// Residuals are collected on `[0, T - δ]`.
    pub delta: f64,
    pub seed: u64,
    pub exec: Execution,
}

/// Euler residuals `r_k = ΔY_k - (p-1) Y_k^{p/(p-1)} Δt - Z_k ΔW_k` of the
/// explicit BSDE solution `Y = g(M)/(T-t)^{p-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BsdeResidualStats {
    pub n_paths: usize,
    pub n_steps: usize,
    pub delta: f64,
    /// Steps per path inside the window.
    pub window_steps: usize,
    /// Mean over paths of the per-path mean residual.
    pub mean_residual: f64,
    pub stderr: f64,
    /// Root mean square over all residuals.
    pub rms_residual: f64,
    pub min_z: f64,
    pub negative_z: usize,
}

pub fn bsde_residual(
    curve: &GCurve,
    p: f64,
    horizon: f64,
    threshold: f64,
    cfg: &BsdeConfig,
) -> Result<BsdeResidualStats> {
    check_exponent(p)?;
    curve.check_exponent_matches(p)?;
    if !(cfg.delta > 0.0 && cfg.delta < horizon / 2.0) {
        return Err(Error::domain("delta", cfg.delta, "must lie in (0, T/2)"));
    }
    if cfg.n_paths < 2 {
        return Err(Error::Usage("the BSDE check needs at least 2 paths".into()));
    }
    let grid = Grid::new(horizon, cfg.n_steps)?;
    let dt = grid.dt;
    let window_steps = ((horizon - cfg.delta) / dt * (1.0 + 1e-12)).floor() as usize;
    if window_steps == 0 {
        return Err(Error::Usage("no time step fits inside [0, T - delta]".into()));
    }
    let q = p / (p - 1.0);
    let y_z = |k: usize, w: f64| {
        let rem = grid.remaining[k];
        let z_arg = (threshold - w) / rem.sqrt();
        let (g, dg) = curve.eval_unchecked(std_normal_cdf(z_arg));
        let y = g / rem.powf(p - 1.0);
        // φ(z_arg)/√rem · rem^{1-p}
        let z = -dg * std_normal_pdf(z_arg) / rem.powf(p - 0.5);
        (y, z)
    };
    let sd = dt.sqrt();
    let per_path = cfg.exec.map_indexed(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, i as u64);
        let mut w = 0.0;
        let (mut y, mut z) = y_z(0, w);
        let (mut sum, mut sum_sq, mut min_z, mut neg) = (0.0, 0.0, f64::INFINITY, 0usize);
        for k in 0..window_steps {
            let dw = sd * rng.sample::<f64, _>(StandardNormal);
            let w_next = w + dw;
            let (y_next, z_next) = y_z(k + 1, w_next);
            let r = y_next - y - (p - 1.0) * y.powf(q) * dt - z * dw;
            sum += r;
            sum_sq += r * r;
            min_z = min_z.min(z);
            neg += usize::from(z < 0.0);
            (w, y, z) = (w_next, y_next, z_next);
        }
        (sum / window_steps as f64, sum_sq, min_z, neg)
    });
    let means: Vec<f64> = per_path.iter().map(|r| r.0).collect();
    let est = Estimate::from_samples(&means);
    let total_sq: f64 = per_path.iter().map(|r| r.1).sum();
    Ok(BsdeResidualStats {
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        delta: cfg.delta,
        window_steps,
        mean_residual: est.mean,
        stderr: est.stderr,
        rms_residual: (total_sq / (window_steps * cfg.n_paths) as f64).sqrt(),
        min_z: per_path.iter().map(|r| r.2).fold(f64::INFINITY, f64::min),
        negative_z: per_path.iter().map(|r| r.3).sum(),
    })
}

/// Medians of `Y_{T-δ}` split by whether the path ends above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TerminalSplit {
    pub delta: f64,
    pub binding_paths: usize,
    pub free_paths: usize,
    /// Median over paths with `W_T > c`.
    pub median_binding: f64,
    /// Median over paths with `W_T < c`.
    pub median_free: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// For each `δ`, samples `(W_{T-δ}, W_T)` exactly and evaluates
/// `Y_{T-δ} = g(M_{T-δ})/δ^{p-1}` on the two classes of paths. The same
/// normal pair is reused across `δ` on path `i`.
pub fn terminal_split(
    curve: &GCurve,
    horizon: f64,
    threshold: f64,
    deltas: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<TerminalSplit>> {
    check_horizon(horizon)?;
    let p = curve.p();
    let normals: Vec<(f64, f64)> = (0..n_paths)
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            (rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
        .collect();
    deltas
        .iter()
        .map(|&delta| {
            if !(delta > 0.0 && delta < horizon) {
                return Err(Error::domain("delta", delta, "must lie in (0, T)"));
            }
            let (mut binding, mut free) = (Vec::new(), Vec::new());
            for &(a, b) in &normals {
                let w = (horizon - delta).sqrt() * a;
                let w_end = w + delta.sqrt() * b;
                let level = std_normal_cdf((threshold - w) / delta.sqrt());
                let y = curve.value(level) / delta.powf(p - 1.0);
                if w_end > threshold {
                    binding.push(y);
                } else {
                    free.push(y);
                }
            }
            Ok(TerminalSplit {
                delta,
                binding_paths: binding.len(),
                free_paths: free.len(),
                median_binding: median(binding),
                median_free: median(free),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsolver::GNode;

    /// `g(y) = 1 - y`, enough to exercise the plumbing.
    fn linear_curve(p: f64) -> GCurve {
        let nodes = (1..200)
            .map(|i| {
                let y = i as f64 / 200.0;
                GNode { y, g: 1.0 - y, dg: -1.0 }
            })
            .collect();
        GCurve::from_nodes(p, 0.005, nodes).unwrap()
    }

    #[test]
    fn brownian_shape_and_determinism() {
        let a = simulate_brownian(1.0, 2, 7).unwrap();
        assert_eq!(a.w.len(), 3);
        assert_eq!(a.w[0], 0.0);
        assert_eq!(a, simulate_brownian(1.0, 2, 7).unwrap());
        assert_ne!(a, simulate_brownian_indexed(1.0, 2, 7, 1).unwrap());
        assert_eq!(a.times, vec![0.0, 0.5, 1.0]);
        assert!(simulate_brownian(1.0, 1, 7).is_err());
    }

    #[test]
    fn decay_integral_is_continuous() {
        let l = (0.5f64).ln();
        assert!((decay_integral(1e-13, l) - decay_integral(1e-7, l)).abs() < 1e-6);
        assert!((decay_integral(1.0, l) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn frozen_gain_cost_is_the_exact_integral() {
        // κ = 1/2, p = 2: u(t) = κ gap (T-t)^{κ-1}/(T-t_k)^κ
        let (k, gap, rem0, rem1) = (0.5f64, 0.8, 1.0, 0.9);
        let u0 = k * gap / rem0;
        let a = 2.0 * (k - 1.0) + 1.0;
        let got = u0 * u0 * rem0 * decay_integral(a, (rem1 / rem0).ln());
        let m = 200_000;
        let h = (rem0 - rem1) / m as f64;
        let quad: f64 = (0..m)
            .map(|i| {
                let s = rem0 - (i as f64 + 0.5) * h;
                (k * gap * s.powf(k - 1.0) / rem0.powf(k)).powi(2) * h
            })
            .sum();
        assert!((got - quad).abs() < 1e-10, "{got} vs {quad}");
    }

    #[test]
    fn full_state_needs_no_control() {
        let curve = linear_curve(2.0);
        let params = Params::new(2.0, 1.0, 1.0, 0.0).unwrap();
        let path = simulate_brownian(1.0, 50, 3).unwrap();
        let sim = run_optimal_control(&curve, &params, &path).unwrap();
        assert!(sim.u.iter().all(|&u| u == 0.0));
        assert_eq!(sim.total_cost(), 0.0);
        let est = mc_cost_estimate(&curve, &params, &McConfig::new(100, 20, 1)).unwrap();
        assert_eq!((est.mean_cost, est.stderr), (0.0, 0.0));
    }

    #[test]
    fn streaming_matches_recorded_paths() {
        let curve = linear_curve(2.0);
        let params = Params::new(2.0, 1.0, 0.1, 0.2).unwrap();
        let mut cfg = McConfig::new(5, 40, 11);
        cfg.exec = Execution::Sequential;
        let costs = mc_path_costs(&OptimalGain::new(&curve), &params, &cfg).unwrap();
        for i in 0..5 {
            let path = simulate_brownian_indexed(1.0, 40, 11, i).unwrap();
            let sim = run_optimal_control(&curve, &params, &path).unwrap();
            assert_eq!(sim.total_cost(), costs.costs[i as usize]);
            assert!(sim.is_feasible(params.threshold));
        }
    }

    #[test]
    fn horizon_mismatch_is_a_usage_error() {
        let curve = linear_curve(2.0);
        let params = Params::new(2.0, 2.0, 0.0, 0.0).unwrap();
        let path = simulate_brownian(1.0, 10, 0).unwrap();
        assert!(matches!(run_optimal_control(&curve, &params, &path), Err(Error::Usage(_))));
        let params = Params::new(3.0, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(run_optimal_control(&curve, &params, &path), Err(Error::Usage(_))));
    }

    #[test]
    fn csv_rows() {
        let curve = linear_curve(2.0);
        let params = Params::new(2.0, 1.0, 0.0, 0.0).unwrap();
        let sim = run_optimal_control(&curve, &params, &simulate_brownian(1.0, 4, 0).unwrap()).unwrap();
        let csv = path_to_csv(&sim);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("t,W,M,u,X,cost_running\n"));
    }

    #[test]
    fn estimate_helpers() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let d = Estimate::paired_difference(&[1.0, 2.0], &[1.5, 2.5]);
        assert_eq!((d.mean, d.stderr), (0.5, 0.0));
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
    }
}
