use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use targetcost::expcase::{exp_optimal_control, exp_value, trend_breaks, witness_csv, witness_study};
use targetcost::gaussian::std_normal_cdf;
use targetcost::gsolver::{load_shooting_result, save_shooting_result, shoot, Sidecar};
use targetcost::oracle::{dp_g_profile, dp_value_with, level_grid, profile_to_csv, TieRule};
use targetcost::sim::{
    bsde_residual, mc_path_costs, path_to_csv, run_feedback, simulate_brownian_indexed, terminal_split,
    BsdeConfig, McConfig, OptimalGain, SimSummary,
};
use targetcost::verify::{run_verify, Budget, VerifyOptions};
use targetcost::{Execution, GCurve, Params};

use crate::config::Resolver;
use crate::{
    BsdeArgs, BudgetArg, CalibrateArgs, Command, CurveArg, ExpcaseArgs, OracleArgs, SimulateArgs, TieArg,
    UsageError, ValueArgs, VerificationFailed, VerifyArgs,
};

const DEFAULT_EPSILON: f64 = 1e-4;
const DEFAULT_BOUNDARY_TOL: f64 = 1e-3;
const DEFAULT_SEED: u64 = 0;

pub fn run(config: Option<&Path>, command: Command) -> Result<()> {
    let r = Resolver::new(config)?;
    match command {
        Command::Calibrate(a) => calibrate(&r, a),
        Command::Value(a) => value(&r, a),
        Command::Oracle(a) => oracle(&r, a),
        Command::Simulate(a) => simulate(&r, a),
        Command::BsdeCheck(a) => bsde_check(&r, a),
        Command::Expcase(a) => expcase(&r, a),
        Command::Verify(a) => verify(&r, a),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    print_text(&serde_json::to_string_pretty(value)?)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn print_text(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("--{name} {v} must be a positive number")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(usage(format!("--{name} {v} must be at least {min}")))
    }
}

fn list<T: std::str::FromStr>(name: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|s| s.trim().parse().map_err(|_| usage(format!("--{name}: cannot parse `{s}`"))))
        .collect()
}

fn check_p(p: f64) -> Result<f64> {
    if p > 1.0 && p.is_finite() {
        Ok(p)
    } else {
        Err(usage(format!("--p {p} must be > 1")))
    }
}

/// Loads `--curve` (checking `--p` against it) or calibrates in memory.
fn resolve_curve(r: &Resolver, arg: &CurveArg, p_flag: Option<f64>) -> Result<(GCurve, Option<PathBuf>)> {
    let p = r.opt(p_flag, "p")?;
    match r.opt(arg.curve.clone(), "curve")? {
        Some(stem) => {
            let (sidecar, curve) = load_shooting_result(&stem)?;
            if let Some(p) = p {
                if (p - sidecar.p).abs() > 1e-12 * p.abs() {
                    return Err(usage(format!(
                        "--p {p} does not match the curve {} calibrated for p = {}",
                        stem.display(),
                        sidecar.p
                    )));
                }
            }
            Ok((curve, Some(stem)))
        }
        None => {
            let p = check_p(p.unwrap_or(2.0))?;
            Ok((shoot(p, DEFAULT_EPSILON, DEFAULT_BOUNDARY_TOL)?.curve, None))
        }
    }
}

fn calibrate(r: &Resolver, a: CalibrateArgs) -> Result<()> {
    let p = check_p(r.get(a.p, "p", 2.0)?)?;
    let epsilon = r.get(a.epsilon, "epsilon", DEFAULT_EPSILON)?;
    if !(epsilon > 0.0 && epsilon < 0.1) {
        return Err(usage(format!("--epsilon {epsilon} is out of range (0, 0.1)")));
    }
    let tol = positive("boundary-tol", r.get(a.boundary_tol, "boundary_tol", DEFAULT_BOUNDARY_TOL)?)?;
    let out = r.get(a.out, "out", PathBuf::from(format!("g_p{p}")))?;
    let start = Instant::now();
    let res = shoot(p, epsilon, tol)?;
    let (csv, json_path) = save_shooting_result(&res, &out)?;
    if res.ambiguous() {
        eprintln!(
            "warning: {} further (g_mid, gamma) brackets also validate; see `alternatives`",
            res.alternatives.len()
        );
    }
    print_json(&json!({
        "result": Sidecar::from_result(&res),
        "csv": csv,
        "json": json_path,
        "nodes": res.curve.nodes().len(),
        "runtime_seconds": start.elapsed().as_secs_f64(),
    }))
}

fn value(r: &Resolver, a: ValueArgs) -> Result<()> {
    let (curve, source) = resolve_curve(r, &a.curve, a.p)?;
    let params = Params::new(
        curve.p(),
        r.get(a.horizon, "T", 1.0)?,
        r.get(a.x, "x", 0.0)?,
        r.get(a.c, "c", 0.0)?,
    )?;
    let level = std_normal_cdf(params.threshold / params.horizon.sqrt());
    let (g, _) = curve.eval(level)?;
    let v = curve.value_function(&params)?;
    print_json(&json!({
        "params": params,
        "level": level,
        "g": g,
        "v": v,
        "curve": source,
    }))
}

fn parse_profile(raw: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = raw.split(':').collect();
    let bad = || usage(format!("--profile `{raw}` must look like a:b:k, e.g. 0.1:0.9:9"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let k: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(a > 0.0 && b < 1.0 && a <= b && k >= 1) {
        return Err(usage(format!("--profile `{raw}`: need 0 < a <= b < 1 and k >= 1")));
    }
    Ok(level_grid(a, b, k))
}

fn oracle(r: &Resolver, a: OracleArgs) -> Result<()> {
    let n = at_least("n", r.get(a.n, "n", 2000)?, 2)?;
    let p = check_p(r.get(a.p, "p", 2.0)?)?;
    let tie = match a.tie {
        Some(TieArg::Strict) => TieRule::Strict,
        Some(TieArg::Conservative) => TieRule::Conservative,
        None => match r.opt::<String>(None, "tie")?.as_deref() {
            None | Some("conservative") => TieRule::Conservative,
            Some("strict") => TieRule::Strict,
            Some(other) => return Err(usage(format!("config key `tie`: unknown rule `{other}`"))),
        },
    };
    let start = Instant::now();
    if let Some(raw) = r.opt(a.profile, "profile")? {
        let levels = parse_profile(&raw)?;
        let profile = dp_g_profile(n, p, &levels, tie, Execution::default())?;
        let csv = profile_to_csv(&profile);
        if let Some(out) = r.opt(a.out, "out")? {
            write_file(&out, &csv)?;
        }
        let rows: Vec<_> = profile.iter().map(|(y, g)| json!({ "y": y, "g_dp": g })).collect();
        return print_json(&json!({
            "n": n, "p": p, "tie": tie, "profile": rows,
            "runtime_seconds": start.elapsed().as_secs_f64(),
        }));
    }
    let horizon = positive("T", r.get(a.horizon, "T", 1.0)?)?;
    let c: f64 = r.get(a.c, "c", 0.0)?;
    if !c.is_finite() {
        return Err(usage(format!("--c {c} must be finite")));
    }
    let value = dp_value_with(n, horizon, c, p, tie)?;
    print_json(&json!({
        "n": n, "T": horizon, "c": c, "p": p, "tie": tie, "value": value,
        "runtime_seconds": start.elapsed().as_secs_f64(),
    }))
}

fn simulate(r: &Resolver, a: SimulateArgs) -> Result<()> {
    let (curve, _) = resolve_curve(r, &a.curve, a.p)?;
    let params = Params::new(
        curve.p(),
        r.get(a.horizon, "T", 1.0)?,
        r.get(a.x, "x", 0.0)?,
        r.get(a.c, "c", 0.0)?,
    )?;
    let n_steps = at_least("n-steps", r.get(a.n_steps, "n_steps", 2000)?, 2)?;
    let n_paths = at_least("n-paths", r.get(a.n_paths, "n_paths", 10_000)?, 1)?;
    let seed = r.seed(a.seed, DEFAULT_SEED)?;
    let exclude = a.exclude_terminal_cost || r.get(None, "exclude_terminal_cost", false)?;
    let mut cfg = McConfig::new(n_paths, n_steps, seed);
    cfg.include_terminal_cost = !exclude;
    let gain = OptimalGain::new(&curve);
    let costs = mc_path_costs(&gain, &params, &cfg)?;
    let est = costs.estimate();
    let summary = SimSummary {
        params,
        n_paths,
        n_steps,
        seed,
        mean_cost: est.mean,
        stderr: est.stderr,
        feasibility_violations: costs.feasibility_violations,
    };
    if let Some(dir) = r.opt(a.dump, "dump")? {
        let k = r.get(a.dump_paths, "dump_paths", 1)?.min(n_paths);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for i in 0..k {
            let path = simulate_brownian_indexed(params.horizon, n_steps, seed, i as u64)?;
            let sim = run_feedback(&gain, &params, &path, !exclude)?;
            write_file(&dir.join(format!("path_{i}.csv")), &path_to_csv(&sim))?;
        }
    }
    let text = serde_json::to_string_pretty(&summary)?;
    if let Some(out) = r.opt(a.summary, "summary")? {
        write_file(&out, &text)?;
    }
    print_text(&text)?;
    if summary.feasibility_violations > 0 {
        return Err(VerificationFailed(vec![format!(
            "{} infeasible paths",
            summary.feasibility_violations
        )])
        .into());
    }
    Ok(())
}

fn bsde_check(r: &Resolver, a: BsdeArgs) -> Result<()> {
    let (curve, _) = resolve_curve(r, &a.curve, a.p)?;
    let horizon = positive("T", r.get(a.horizon, "T", 1.0)?)?;
    let c: f64 = r.get(a.c, "c", 0.0)?;
    let n_paths = at_least("n-paths", r.get(a.n_paths, "n_paths", 10_000)?, 2)?;
    let steps: Vec<usize> = list("n-steps", &r.get(a.n_steps, "n_steps", "500,1000,2000".to_string())?)?;
    let delta = r.get(a.delta, "delta", 0.1 * horizon)?;
    if !(delta > 0.0 && delta < horizon / 2.0) {
        return Err(usage(format!("--delta {delta} must lie in (0, T/2)")));
    }
    let seed = r.seed(a.seed, DEFAULT_SEED)?;
    let deltas: Vec<f64> = list(
        "terminal-deltas",
        &r.get(a.terminal_deltas, "terminal_deltas", "0.1,0.01,0.001".to_string())?,
    )?;
    let mut levels = Vec::new();
    for n_steps in steps {
        let cfg = BsdeConfig {
            n_paths,
            n_steps: at_least("n-steps", n_steps, 2)?,
            delta,
            seed,
            exec: Execution::default(),
        };
        levels.push(bsde_residual(&curve, curve.p(), horizon, c, &cfg)?);
    }
    let terminal = terminal_split(&curve, horizon, c, &deltas, n_paths, seed)?;
    print_json(&json!({
        "p": curve.p(), "T": horizon, "c": c, "seed": seed,
        "residuals": levels, "terminal": terminal,
    }))
}

fn expcase(r: &Resolver, a: ExpcaseArgs) -> Result<()> {
    let horizon = positive("T", r.get(a.horizon, "T", 1.0)?)?;
    let x: f64 = r.get(a.x, "x", 0.0)?;
    let lam = positive("lambda", r.get(a.lam, "lambda", 1.0)?)?;
    let c: f64 = r.get(a.c, "c", 0.0)?;
    let ns: Vec<u32> = list("n-list", &r.get(a.n_list, "n_list", "4,8,16,32,64".to_string())?)?;
    if let Some(&n) = ns.iter().find(|&&n| n < 2) {
        return Err(usage(format!("--n-list: witness index {n} must be >= 2")));
    }
    let rows = witness_study(&ns, horizon, x, lam, c, Execution::default())?;
    for i in trend_breaks(&rows) {
        eprintln!(
            "warning: mass/entropy trend breaks between n = {} and n = {}",
            rows[i].witness.n,
            rows[i + 1].witness.n
        );
    }
    if let Some(out) = r.opt(a.out, "out")? {
        write_file(&out, &witness_csv(&rows))?;
    }
    print_json(&json!({
        "T": horizon, "x": x, "lambda": lam, "c": c,
        "value": exp_value(horizon, x, lam)?,
        "optimal_control": exp_optimal_control(horizon, x)?,
        "witnesses": rows,
    }))
}

fn verify(r: &Resolver, a: VerifyArgs) -> Result<()> {
    let budget = match a.budget {
        Some(BudgetArg::Quick) => Budget::Quick,
        Some(BudgetArg::Full) => Budget::Full,
        None => match r.opt::<String>(None, "budget")?.as_deref() {
            None | Some("full") => Budget::Full,
            Some("quick") => Budget::Quick,
            Some(other) => return Err(usage(format!("config key `budget`: unknown budget `{other}`"))),
        },
    };
    let p = r.opt(a.p, "p")?.map(check_p).transpose()?;
    let opts = VerifyOptions {
        budget,
        p,
        seed: r.seed(a.seed, VerifyOptions::default().seed)?,
        perturb_g: a.perturb_g,
        exec: Execution::default(),
    };
    let report = run_verify(&opts);
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(out) = r.opt(a.report, "report")? {
        write_file(&out, &text)?;
    }
    print_text(&text)?;
    for c in &report.checks {
        let mark = match (c.passed, c.informational) {
            (true, _) => "pass",
            (false, true) => "flag",
            (false, false) => "FAIL",
        };
        eprintln!("{mark:4}  {}/{}", c.suite, c.name);
    }
    if report.passed {
        Ok(())
    } else {
        Err(VerificationFailed(report.failed).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_levels() {
        let l = parse_profile("0.1:0.9:9").unwrap();
        assert_eq!(l.len(), 9);
        assert!(parse_profile("0.1:0.9").is_err());
        assert!(parse_profile("0:0.9:3").is_err());
        assert!(parse_profile("0.1:x:3").is_err());
    }
}
