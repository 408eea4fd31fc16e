use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn targetcost(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_targetcost"));
    cmd.args(args).env_remove("TARGETCOST_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    targetcost(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn calibrate(dir: &Path, p: &str) -> String {
    let stem = dir.join(format!("g{p}"));
    let stem = stem.to_str().unwrap().to_string();
    json(&run(&["calibrate", "--p", p, "--out", &stem]));
    stem
}

#[test]
fn help_lists_every_flag() {
    let cases: [(&str, &[&str]); 7] = [
        ("calibrate", &["--p", "--epsilon", "--boundary-tol", "--out"]),
        ("value", &["--curve", "--p", "--T", "--x", "--c"]),
        ("oracle", &["--n", "--T", "--c", "--p", "--tie", "--profile", "--out"]),
        (
            "simulate",
            &["--curve", "--p", "--T", "--x", "--c", "--n-steps", "--n-paths", "--seed", "--dump", "--dump-paths", "--summary", "--exclude-terminal-cost"],
        ),
        ("bsde-check", &["--curve", "--p", "--T", "--c", "--n-paths", "--n-steps", "--delta", "--seed", "--terminal-deltas"]),
        ("expcase", &["--T", "--x", "--lambda", "--c", "--n-list", "--out"]),
        ("verify", &["--p", "--budget", "--seed", "--report"]),
    ];
    for (cmd, flags) in cases {
        let out = run(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in flags.iter().chain(&["--config", "--threads"]) {
            assert!(text.contains(&format!("{flag} ")) || text.contains(&format!("{flag}\n")), "{cmd} --help misses {flag}");
        }
    }
}

#[test]
fn bad_numbers_are_usage_errors() {
    for args in [
        &["value", "--T", "abc"][..],
        &["oracle", "--n", "-3"],
        &["simulate", "--n-paths", "0"],
        &["calibrate", "--epsilon", "0.5"],
        &["value", "--T", "-1"],
        &["expcase", "--lambda", "nan"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(args[1]) || err.contains(&args[1].replace("--", "")), "{args:?}: {err}");
    }
}

#[test]
fn sidecar_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let stem = calibrate(dir.path(), "2");
    let args = ["value", "--curve", &stem, "--T", "4", "--x", "0.25", "--c", "-0.3"];
    let a = json(&run(&args));
    let b = json(&run(&args));
    assert_eq!(a["v"].as_f64().unwrap().to_bits(), b["v"].as_f64().unwrap().to_bits());
    let fresh = json(&run(&["value", "--T", "4", "--x", "0.25", "--c", "-0.3"]));
    assert_eq!(a["v"].as_f64().unwrap().to_bits(), fresh["v"].as_f64().unwrap().to_bits());
    assert_eq!(json(&run(&["value", "--curve", &stem, "--x", "1"]))["v"].as_f64(), Some(0.0));
}

#[test]
fn exponent_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let stem = calibrate(dir.path(), "3");
    let out = run(&["value", "--curve", &stem, "--p", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let stem = calibrate(dir.path(), "2");
    let dump = |name: &str| {
        let d = dir.path().join(name);
        let out = run(&[
            "simulate", "--curve", &stem, "--n-paths", "200", "--n-steps", "200", "--seed", "5", "--dump",
            d.to_str().unwrap(), "--dump-paths", "2",
        ]);
        (json(&out), std::fs::read(d.join("path_1.csv")).unwrap())
    };
    let (s1, csv1) = dump("a");
    let (s2, csv2) = dump("b");
    assert_eq!(s1, s2);
    assert_eq!(csv1, csv2);
    assert_eq!(s1["feasibility_violations"], 0);
    let text = String::from_utf8(csv1).unwrap();
    assert_eq!(text.lines().next(), Some("t,W,M,u,X,cost_running"));
    assert_eq!(text.lines().count(), 202);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let stem = calibrate(dir.path(), "2");
    let base = ["simulate", "--curve", &stem, "--n-paths", "100", "--n-steps", "100"];
    let mean = |cmd: &mut Command| json(&cmd.output().unwrap())["mean_cost"].as_f64().unwrap();
    let flag = mean(&mut targetcost(&[&base[..], &["--seed", "11"]].concat()));
    let env = mean(targetcost(&base).env("TARGETCOST_SEED", "11"));
    assert_eq!(flag, env);
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# run settings\nseed = 11\n").unwrap();
    let file = mean(targetcost(&[&base[..], &["--config", cfg.to_str().unwrap()]].concat()).env("TARGETCOST_SEED", "99"));
    assert_eq!(flag, file);
    let other = mean(targetcost(&base).env("TARGETCOST_SEED", "12"));
    assert_ne!(flag, other);
}

#[test]
fn config_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("oracle.conf");
    std::fs::write(&cfg, "n = 200\nT = 2\nc = -0.5  # below the start\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = json(&run(&["oracle", "--config", cfg]));
    assert_eq!(from_file["n"], 200);
    assert_eq!(from_file["T"], 2.0);
    assert_eq!(from_file["c"], -0.5);
    let overridden = json(&run(&["oracle", "--config", cfg, "--T", "1"]));
    assert_eq!(overridden["T"], 1.0);
    std::fs::write(dir.path().join("bad.conf"), "n: 3\n").unwrap();
    let bad = run(&["oracle", "--config", dir.path().join("bad.conf").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn oracle_profile_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("profile.csv");
    json(&run(&["oracle", "--n", "400", "--profile", "0.1:0.9:9", "--out", out.to_str().unwrap()]));
    let text = std::fs::read_to_string(out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(text.lines().next(), Some("y,g_dp"));
    assert_eq!(rows.len(), 9);
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1]));
}

#[test]
fn expcase_closed_form_and_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("w.csv");
    let out = json(&run(&["expcase", "--out", csv.to_str().unwrap()]));
    assert!((out["value"].as_f64().unwrap() - 1.718281828459045).abs() < 1e-12);
    let at_one = json(&run(&["expcase", "--x", "1"]));
    assert_eq!(at_one["value"], 0.0);
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next(), Some("n,I_n,mass,entropy,duality_gap"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn bsde_check_reports_each_resolution() {
    let out = json(&run(&["bsde-check", "--n-paths", "200", "--n-steps", "100,200", "--terminal-deltas", "0.1"]));
    let res = out["residuals"].as_array().unwrap();
    assert_eq!(res.len(), 2);
    assert!(res.iter().all(|r| r["negative_z"] == 0));
    assert_eq!(out["terminal"].as_array().unwrap().len(), 1);
}

#[test]
fn verify_catches_a_perturbed_curve() {
    let out = run(&["verify", "--budget", "quick", "--perturb-g", "0.05"]);
    assert_eq!(out.status.code(), Some(4));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let failed_bsde = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c["suite"] == "bsde" && c["passed"] == false && c["informational"] == false);
    assert!(failed_bsde);
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL  bsde/"));
}

#[test]
fn quick_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = run(&["verify", "--budget", "quick", "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(saved["passed"], true);
    assert_eq!(saved["failed"].as_array().map(Vec::len), Some(0));
    assert!(saved["elapsed_seconds"].as_f64().unwrap() < 60.0);
}
