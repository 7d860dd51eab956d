//! Per-run metric report and manifest, both flat `key = value` text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use peml_core::metrics::{percent_error, rmse, variance};

use crate::BenchError;

pub const REPORT_FILE: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentError {
    pub name: String,
    pub rmse: f64,
    pub nmse: f64,
}

impl ComponentError {
    /// NMSE = RMSE² / variance(truth).
    pub fn new(name: &str, pred: &[f64], truth: &[f64]) -> Self {
        let r = rmse(pred, truth);
        Self { name: name.to_string(), rmse: r, nmse: r * r / variance(truth) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub truth: f64,
    pub estimate: f64,
    pub percent_error: f64,
}

impl ParamError {
    pub fn new(name: &str, estimate: f64, truth: f64) -> Self {
        Self { name: name.to_string(), truth, estimate, percent_error: percent_error(estimate, truth) }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub status: String,
    pub wall_time_s: f64,
    pub components: Vec<ComponentError>,
    pub params: Vec<ParamError>,
    /// Method-specific scalars (coverage, baseline errors, ...).
    pub extra: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method = {}", self.method);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        let _ = writeln!(s, "status = {}", self.status);
        let _ = writeln!(s, "wall_time_s = {}", self.wall_time_s);
        for c in &self.components {
            let _ = writeln!(s, "rmse.{} = {}", c.name, c.rmse);
            let _ = writeln!(s, "nmse.{} = {}", c.name, c.nmse);
        }
        for p in &self.params {
            let _ = writeln!(s, "param.{}.true = {}", p.name, p.truth);
            let _ = writeln!(s, "param.{}.estimate = {}", p.name, p.estimate);
            let _ = writeln!(s, "param.{}.percent_error = {}", p.name, p.percent_error);
        }
        for (k, v) in &self.extra {
            let _ = writeln!(s, "extra.{k} = {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut r = MetricReport::default();
        let mut params: BTreeMap<String, ParamError> = BTreeMap::new();
        let mut comps: Vec<ComponentError> = Vec::new();
        let real = |k: &str, v: &str| v.parse::<f64>().map_err(|e| BenchError::Report(format!("{k}: {e}")));
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| BenchError::Report(format!("bad line `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "method" => r.method = v.to_string(),
                "seed" => r.seed = v.parse().map_err(|e| BenchError::Report(format!("seed: {e}")))?,
                "config_hash" => r.config_hash = v.to_string(),
                "status" => r.status = v.to_string(),
                "wall_time_s" => r.wall_time_s = real(k, v)?,
                _ => {
                    if let Some(name) = k.strip_prefix("rmse.") {
                        comps.push(ComponentError { name: name.to_string(), rmse: real(k, v)?, nmse: f64::NAN });
                    } else if let Some(name) = k.strip_prefix("nmse.") {
                        let c = comps.iter_mut().find(|c| c.name == name).ok_or_else(|| BenchError::Report(format!("{k} before its rmse")))?;
                        c.nmse = real(k, v)?;
                    } else if let Some(rest) = k.strip_prefix("param.") {
                        let (name, field) = rest.rsplit_once('.').ok_or_else(|| BenchError::Report(format!("bad key `{k}`")))?;
                        let p = params.entry(name.to_string()).or_insert_with(|| ParamError {
                            name: name.to_string(),
                            truth: f64::NAN,
                            estimate: f64::NAN,
                            percent_error: f64::NAN,
                        });
                        match field {
                            "true" => p.truth = real(k, v)?,
                            "estimate" => p.estimate = real(k, v)?,
                            "percent_error" => p.percent_error = real(k, v)?,
                            _ => return Err(BenchError::Report(format!("bad key `{k}`"))),
                        }
                    } else if let Some(name) = k.strip_prefix("extra.") {
                        r.extra.insert(name.to_string(), real(k, v)?);
                    } else {
                        return Err(BenchError::Report(format!("unknown key `{k}`")));
                    }
                }
            }
        }
        r.components = comps;
        r.params = params.into_values().collect();
        Ok(r)
    }

    pub fn load(dir: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(dir.join(REPORT_FILE)).map_err(|e| BenchError::Report(format!("{}: {e}", dir.display())))?;
        Self::parse(&text)
    }

    pub fn component(&self, name: &str) -> Option<&ComponentError> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// Tool versions, run identity and every resolved hyperparameter.
pub fn manifest_text(method: &str, seed: u64, hash: &str, resolved: &BTreeMap<String, String>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[run]");
    let _ = writeln!(s, "method = {method}");
    let _ = writeln!(s, "seed = {seed}");
    let _ = writeln!(s, "config_hash = {hash}");
    let _ = writeln!(s, "peml-bench = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "peml-core = {}", peml_core::VERSION);
    let _ = writeln!(s);
    let _ = writeln!(s, "[resolved]");
    for (k, v) in resolved {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Keys listed under `[resolved]` in a manifest.
pub fn manifest_keys(text: &str) -> Vec<String> {
    text.lines()
        .skip_while(|l| l.trim() != "[resolved]")
        .skip(1)
        .filter_map(|l| l.split_once('=').map(|(k, _)| k.trim().to_string()))
        .collect()
}
