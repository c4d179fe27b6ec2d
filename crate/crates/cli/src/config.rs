//! `key = value` configuration files.
//!
//! Every tunable can come from a command-line flag, a config file or a
//! built-in default, in that order of precedence. Keys are the flag names in
//! snake_case.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const KEYS: &[&str] = &[
    "seed",
    "scan_rate",
    "speed",
    "map_leaf",
    "resolution",
    "min_points",
    "scan_leaf",
    "max_iterations",
    "divergence_threshold",
    "min_matched_fraction",
    "neighborhood",
    "relation",
    "max_dt",
    "delta",
    "align",
    "radius",
    "min_session_fraction",
    "threshold",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", n + 1))?;
            let (k, v) = (k.trim().replace('-', "_"), v.trim());
            if !KEYS.contains(&k.as_str()) {
                bail!("config line {}: unknown key `{k}`", n + 1);
            }
            if v.is_empty() {
                bail!("config line {}: empty value for `{k}`", n + 1);
            }
            if values.insert(k.clone(), v.to_string()).is_some() {
                bail!("config line {}: duplicate key `{k}`", n + 1);
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Config::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Flag value if given, else the config value, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KEYS.contains(&key), "{key}");
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(s) => s
                .parse()
                .map_err(|e| anyhow!("config key `{key}`: invalid value `{s}`: {e}")),
            None => Ok(default),
        }
    }
}
