//! Flat `key = value` experiment files with `[section]` headers.
//!
//! Keys before the first header are top level (`method`, `seed`, `out`).
//! `[sim]` holds simulator overrides and `[<method>]` the method's
//! hyperparameters. Every read is recorded with its resolved value, so the
//! manifest can list exactly what a run consumed, and keys nobody read are
//! rejected before anything runs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::BenchError;

pub const METHODS: [&str; 12] = [
    "ukf",
    "pf",
    "sindy",
    "nn-baseline",
    "pinn-discovery",
    "pinn-enhanced",
    "pinn-forward",
    "pgnn",
    "gp-se",
    "gp-sdof",
    "node",
    "hnn",
];

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed file plus the record of consumed keys.
#[derive(Clone, Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    resolved: BTreeMap<String, String>,
}

fn qualify(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| BenchError::syntax(line, "unterminated section header"))?.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(BenchError::syntax(line, "bad section name"));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| BenchError::syntax(line, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(BenchError::syntax(line, "bad key"));
            }
            let q = qualify(&section, k);
            if entries.insert(q.clone(), Entry { value: v.to_string(), line }).is_some() {
                return Err(BenchError::field(&q, "given more than once"));
            }
        }
        Ok(Self { entries, resolved: BTreeMap::new() })
    }

    /// Replaces (or adds) a top-level value, as the CLI overrides do.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), Entry { value: value.to_string(), line: 0 });
    }

    /// Qualified keys present in the file (and overrides).
    pub fn keys(&self) -> impl Iterator<Item = String> + '_ {
        self.entries.keys().cloned()
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.entries.get(&qualify(section, key)).map(|e| e.value.as_str())
    }

    fn parse_value<T: FromStr>(q: &str, v: &str) -> Result<T, BenchError>
    where
        T::Err: Display,
    {
        v.parse::<T>().map_err(|e| BenchError::field(q, format!("cannot parse `{v}`: {e}")))
    }

    pub fn get<T>(&mut self, section: &str, key: &str, default: T) -> Result<T, BenchError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let q = qualify(section, key);
        let v = match self.entries.get(&q) {
            Some(e) => Self::parse_value(&q, &e.value)?,
            None => default,
        };
        self.resolved.insert(q, v.to_string());
        Ok(v)
    }

    pub fn require<T>(&mut self, section: &str, key: &str) -> Result<T, BenchError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let q = qualify(section, key);
        let e = self.entries.get(&q).ok_or_else(|| BenchError::field(&q, "required but missing"))?;
        let v: T = Self::parse_value(&q, &e.value)?;
        self.resolved.insert(q, v.to_string());
        Ok(v)
    }

    /// Comma-separated reals.
    pub fn get_list(&mut self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, BenchError> {
        let q = qualify(section, key);
        let v = match self.entries.get(&q) {
            Some(e) => e.value.split(',').map(|s| Self::parse_value::<f64>(&q, s.trim())).collect::<Result<Vec<_>, _>>()?,
            None => default.to_vec(),
        };
        if v.is_empty() {
            return Err(BenchError::field(&q, "empty list"));
        }
        self.resolved.insert(q, v.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        Ok(v)
    }

    pub fn positive(&mut self, section: &str, key: &str, default: f64) -> Result<f64, BenchError> {
        let v = self.get(section, key, default)?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(BenchError::field(&qualify(section, key), format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn count(&mut self, section: &str, key: &str, default: usize) -> Result<usize, BenchError> {
        let v = self.get(section, key, default)?;
        if v == 0 {
            return Err(BenchError::field(&qualify(section, key), "must be at least 1"));
        }
        Ok(v)
    }

    /// The method name, validated against the known set.
    pub fn method(&mut self) -> Result<String, BenchError> {
        let m: String = self.require("", "method")?;
        if !METHODS.contains(&m.as_str()) {
            return Err(BenchError::field("method", format!("unknown method `{m}`; expected one of {}", METHODS.join(", "))));
        }
        Ok(m)
    }

    /// Errors on the first key that no reader consumed.
    pub fn check_consumed(&self) -> Result<(), BenchError> {
        match self.entries.iter().find(|(k, _)| !self.resolved.contains_key(*k)) {
            Some((k, e)) if e.line > 0 => Err(BenchError::field(k, format!("unknown key (line {})", e.line))),
            Some((k, _)) => Err(BenchError::field(k, "unknown key")),
            None => Ok(()),
        }
    }

    /// Every consumed key with its resolved value, defaults included.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    /// SHA-256 over the sorted resolved `key=value` lines, excluding the
    /// output directory. Independent of file layout and line endings.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.resolved.iter().filter(|(k, _)| k.as_str() != "out") {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
