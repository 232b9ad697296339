//! Flat `key = value` settings files. Command-line flags win over file
//! values, which win over built-in defaults.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Every key any subcommand understands; anything else in a file is an error.
pub const KNOWN_KEYS: &[&str] = &[
    "nodes",
    "days",
    "interval",
    "noise_std",
    "spike_probability",
    "seed",
    "window",
    "history",
    "horizon",
    "width",
    "stride",
    "rolling",
    "mape_epsilon",
    "split",
    "split_ratios",
    "lr",
    "epochs",
    "batch_size",
    "optimizer",
    "patience",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: HashMap<String, String>,
    source: String,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{source}:{}: expected key = value, got {raw:?}", i + 1);
            };
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("{source}:{}: unknown key {key:?}", i + 1);
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("{source}:{}: duplicate key {key:?}", i + 1);
            }
        }
        Ok(FileConfig {
            values,
            source: source.to_string(),
        })
    }

    /// `flag`, else the file value for `key`, else `default`.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow::anyhow!("{}: bad value {raw:?} for {key}: {e}", self.source)),
            None => Ok(default),
        }
    }

    /// Boolean switch: a set flag wins, otherwise the file decides.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        self.resolve(flag.then_some(true), key, false)
    }
}
