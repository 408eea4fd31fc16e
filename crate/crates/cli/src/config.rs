//! Parameter resolution: command-line flag, then `--config` file, then the
//! `TARGETCOST_SEED` environment variable (seed only), then the default.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

use crate::UsageError;

pub const SEED_ENV: &str = "TARGETCOST_SEED";

#[derive(Debug, Default)]
pub struct Resolver {
    file: HashMap<String, String>,
    env_seed: Option<String>,
}

/// Flag spelling to config key: `--n-paths` and `n_paths` are the same key.
fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            UsageError(format!("config line {}: expected `key = value`, got `{}`", i + 1, raw.trim()))
        })?;
        let key = normalize(k);
        if key.is_empty() {
            return Err(UsageError(format!("config line {}: empty key", i + 1)).into());
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
                parse_config(&text).with_context(|| format!("in config file {}", path.display()))?
            }
            None => HashMap::new(),
        };
        Ok(Self {
            file,
            env_seed: std::env::var(SEED_ENV).ok(),
        })
    }

    /// `flag` if given, else the config entry for `key`, else `None`.
    pub fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(&normalize(key)) {
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                UsageError(format!("config key `{key}`: cannot parse `{raw}`")).into()
            }),
            None => Ok(None),
        }
    }

    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn seed(&self, flag: Option<u64>, default: u64) -> Result<u64> {
        if let Some(s) = self.opt(flag, "seed")? {
            return Ok(s);
        }
        match &self.env_seed {
            Some(raw) => raw
                .trim()
                .parse()
                .map_err(|_| UsageError(format!("{SEED_ENV}: cannot parse `{raw}` as a seed")).into()),
            None => Ok(default),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let cfg = parse_config("# header\np = 2.5\n n-paths=100 # trailing\n\nT = 4\n").unwrap();
        assert_eq!(cfg["p"], "2.5");
        assert_eq!(cfg["n_paths"], "100");
        assert_eq!(cfg["T"], "4");
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn flags_beat_file() {
        let r = Resolver {
            file: parse_config("p = 3\nseed = 9").unwrap(),
            env_seed: Some("5".into()),
        };
        assert_eq!(r.get(Some(2.0), "p", 1.5).unwrap(), 2.0);
        assert_eq!(r.get(None, "p", 1.5).unwrap(), 3.0);
        assert_eq!(r.get::<f64>(None, "x", 0.25).unwrap(), 0.25);
        assert_eq!(r.seed(None, 1).unwrap(), 9);
        assert_eq!(r.seed(Some(4), 1).unwrap(), 4);
        let r = Resolver {
            file: HashMap::new(),
            env_seed: Some("5".into()),
        };
        assert_eq!(r.seed(None, 1).unwrap(), 5);
        let r = Resolver {
            file: parse_config("p = two").unwrap(),
            env_seed: None,
        };
        assert!(r.get::<f64>(None, "p", 2.0).is_err());
    }
}
