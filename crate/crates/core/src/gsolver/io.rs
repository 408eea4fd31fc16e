//! Curve files: `<stem>.csv` with header `y,g,dg` (17 significant digits)
//! and a `<stem>.json` sidecar with the shooting metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GCurve, GNode, ShootingResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub p: f64,
    pub epsilon: f64,
    pub g_mid: f64,
    pub gamma: f64,
    pub left_residual: f64,
    pub right_residual: f64,
    #[serde(default)]
    pub threshold_slope: Option<f64>,
    #[serde(default)]
    pub ambiguous: bool,
    #[serde(default)]
    pub alternatives: Vec<(f64, f64)>,
}

impl Sidecar {
    pub fn from_result(res: &ShootingResult) -> Self {
        Self {
            p: res.curve.p(),
            epsilon: res.curve.epsilon(),
            g_mid: res.g_mid,
            gamma: res.gamma,
            left_residual: res.left_residual,
            right_residual: res.right_residual,
            threshold_slope: Some(res.threshold_slope()),
            ambiguous: res.ambiguous(),
            alternatives: res.alternatives.clone(),
        }
    }
}

/// Maps `foo`, `foo.csv` or `foo.json` to the `(csv, json)` pair.
pub fn curve_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let base = match stem.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("json") => stem.with_extension(""),
        _ => stem.to_path_buf(),
    };
    let mut csv = base.clone().into_os_string();
    csv.push(".csv");
    let mut json = base.into_os_string();
    json.push(".json");
    (csv.into(), json.into())
}

pub fn curve_to_csv(curve: &GCurve) -> String {
    let mut out = String::with_capacity(64 * curve.nodes().len() + 8);
    out.push_str("y,g,dg\n");
    for n in curve.nodes() {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", n.y, n.g, n.dg);
    }
    out
}

pub fn save_shooting_result(res: &ShootingResult, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let (csv, json) = curve_paths(stem);
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&csv, curve_to_csv(&res.curve)).map_err(|e| Error::io(&csv, e))?;
    let text = serde_json::to_string_pretty(&Sidecar::from_result(res))?;
    fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
    Ok((csv, json))
}

pub fn load_shooting_result(stem: &Path) -> Result<(Sidecar, GCurve)> {
    let (csv, json) = curve_paths(stem);
    let meta: Sidecar = serde_json::from_str(
        &fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?,
    )?;
    let text = fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?;
    let nodes = parse_csv(&text).map_err(|reason| Error::Format {
        path: csv.clone(),
        reason,
    })?;
    let curve = GCurve::from_nodes(meta.p, meta.epsilon, nodes).map_err(|e| Error::Format {
        path: csv,
        reason: e.to_string(),
    })?;
    Ok((meta, curve))
}

fn parse_csv(text: &str) -> std::result::Result<Vec<GNode>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next().map(str::trim) {
        Some("y,g,dg") => {}
        other => return Err(format!("expected header `y,g,dg`, found {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(format!("row {}: expected 3 fields", i + 1));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| format!("row {}: {s:?}: {e}", i + 1))
            };
            Ok(GNode {
                y: num(fields[0])?,
                g: num(fields[1])?,
                dg: num(fields[2])?,
            })
        })
        .collect()
}
