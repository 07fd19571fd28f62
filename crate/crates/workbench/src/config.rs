//! Flat dotted-key configuration.
//!
//! A config is the reference defaults (`defaults.conf`, compiled in) with
//! file and command-line overrides applied on top. Keys outside the
//! reference set are rejected, so a typo never silently falls back to a
//! default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use fkns_core::potential::Observable;
use fkns_core::Wavenumber;
use sha2::{Digest, Sha256};

pub const DEFAULTS: &str = include_str!("../defaults.conf");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}:{line}: expected `key = value`, found `{text}`")]
    Syntax { origin: String, line: usize, text: String },
    #[error("{origin}: unknown config key `{key}`")]
    UnknownKey { origin: String, key: String },
    #[error("config key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, ConfigError>;

fn value_error(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_lines(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            origin: origin.to_string(),
            line: i + 1,
            text: line.to_string(),
        })?;
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                origin: origin.to_string(),
                line: i + 1,
                text: line.to_string(),
            });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        let entries = parse_lines(DEFAULTS, "defaults.conf")
            .expect("reference defaults parse")
            .into_iter()
            .collect();
        Self { entries }
    }
}

impl Config {
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn apply(&mut self, pairs: Vec<(String, String)>, origin: &str) -> Result<()> {
        for (k, v) in pairs {
            match self.entries.get_mut(&k) {
                Some(slot) => *slot = v,
                None => {
                    return Err(ConfigError::UnknownKey {
                        origin: origin.to_string(),
                        key: k,
                    })
                }
            }
        }
        Ok(())
    }

    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let pairs = parse_lines(text, origin)?;
        self.apply(pairs, origin)
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.merge_text(&text, &path.display().to_string())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let pairs = parse_lines(assignment, "--set")?;
        if pairs.len() != 1 {
            return Err(ConfigError::Syntax {
                origin: "--set".into(),
                line: 1,
                text: assignment.to_string(),
            });
        }
        self.apply(pairs, "--set")
    }

    pub fn set_value(&mut self, key: &str, value: impl ToString) -> Result<()> {
        self.apply(vec![(key.to_string(), value.to_string())], "--set")
    }

    /// Sorted `key = value` lines; the canonical form that is hashed.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of [`Self::resolved_text`] without the keys that cannot affect
    /// results (worker count and output location).
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            if k == "workers" || k == "output.dir" {
                continue;
            }
            h.update(format!("{k} = {v}\n"));
        }
        hex(&h.finalize())
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| value_error(key, "missing"))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        let s = self.str(key)?;
        s.parse()
            .map_err(|_| value_error(key, format!("expected {what}, found `{s}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let x: f64 = parse_real(self.str(key)?).ok_or_else(|| value_error(key, "expected a number"))?;
        if x.is_nan() {
            return Err(value_error(key, "NaN is not accepted"));
        }
        Ok(x)
    }

    pub fn positive(&self, key: &str) -> Result<f64> {
        let x = self.f64(key)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(value_error(key, format!("must be positive and finite, found {x}")));
        }
        Ok(x)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn count(&self, key: &str) -> Result<usize> {
        let n = self.usize(key)?;
        if n == 0 {
            return Err(value_error(key, "must be at least 1"));
        }
        Ok(n)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.str(key)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(value_error(key, format!("expected true or false, found `{other}`"))),
        }
    }

    fn items(&self, key: &str) -> Result<Vec<&str>> {
        Ok(self.str(key)?.split_whitespace().collect())
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.items(key)?
            .into_iter()
            .map(|s| parse_real(s).ok_or_else(|| value_error(key, format!("bad number `{s}`"))))
            .collect()
    }

    /// Nonempty list of positive finite values.
    pub fn positive_list(&self, key: &str) -> Result<Vec<f64>> {
        let xs = self.f64_list(key)?;
        if xs.is_empty() {
            return Err(value_error(key, "needs at least one value"));
        }
        if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(value_error(key, format!("values must be positive and finite, found {x}")));
        }
        Ok(xs)
    }

    /// Exactly two values `lo hi` with `lo < hi`.
    pub fn range(&self, key: &str) -> Result<(f64, f64)> {
        match self.f64_list(key)?.as_slice() {
            &[lo, hi] if lo < hi => Ok((lo, hi)),
            _ => Err(value_error(key, "expected two values `lo hi` with lo < hi")),
        }
    }

    pub fn modes(&self, key: &str) -> Result<Vec<Wavenumber>> {
        self.items(key)?
            .into_iter()
            .map(|s| parse_mode(s).ok_or_else(|| value_error(key, format!("bad wavenumber `{s}`, expected `k1,k2`"))))
            .collect()
    }

    pub fn observables(&self, key: &str) -> Result<Vec<Observable>> {
        self.items(key)?
            .into_iter()
            .map(|s| Observable::parse(s).map_err(|e| value_error(key, e.to_string())))
            .collect()
    }

    pub fn observable(&self, key: &str) -> Result<Observable> {
        Observable::parse(self.str(key)?).map_err(|e| value_error(key, e.to_string()))
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        value_error(key, message)
    }
}

/// Accepts `inf`, `-inf` and the usual float syntax.
fn parse_real(s: &str) -> Option<f64> {
    match s {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

fn parse_mode(s: &str) -> Option<Wavenumber> {
    let s = s.trim_start_matches('(').trim_end_matches(')');
    let (a, b) = s.split_once(',')?;
    Some(Wavenumber::new(a.trim().parse().ok()?, b.trim().parse().ok()?))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
