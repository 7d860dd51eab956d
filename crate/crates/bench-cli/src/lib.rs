//! Experiment harness: runs any method of `peml-core` from a config file
//! and records CSVs, a metric report and a manifest per run.

pub mod config;
pub mod methods;
pub mod report;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::config::Config;
use crate::methods::{execute, Plan, SimSetup};
use crate::report::{manifest_text, MetricReport, MANIFEST_FILE, REPORT_FILE};

pub const TRUTH_FILE: &str = "truth.csv";
pub const CONFIG_ECHO_FILE: &str = "config.cfg";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("run failed: {0}")]
    Method(#[from] peml_core::Error),
    #[error("report: {0}")]
    Report(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl BenchError {
    pub fn syntax(line: usize, msg: impl Display) -> Self {
        BenchError::Syntax { line, msg: msg.to_string() }
    }

    pub fn field(field: &str, msg: impl Display) -> Self {
        BenchError::Field { field: field.to_string(), msg: msg.to_string() }
    }

    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use peml_core::Error as E;
        match self {
            BenchError::Syntax { .. } | BenchError::Field { .. } => 2,
            BenchError::Method(E::InvalidParam(_) | E::Mode(_) | E::Overdamped { .. } | E::EmptySelection(_)) => 2,
            BenchError::Method(E::Io(_) | E::Csv(_) | E::Format(_)) => 1,
            BenchError::Method(_) => 3,
            BenchError::Report(_) | BenchError::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), BenchError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// CLI overrides applied on top of the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A validated experiment: everything read, nothing run yet.
#[derive(Debug)]
pub struct Experiment {
    pub method: Option<String>,
    pub seed: u64,
    pub out: PathBuf,
    pub sim: SimSetup,
    pub plan: Option<Plan>,
    pub config: Config,
    pub echo: String,
}

impl Experiment {
    /// Parses and validates. `need_method` is false for ground-truth-only
    /// runs, where a method is optional but still validated when present.
    pub fn load(text: &str, overrides: &Overrides, need_method: bool) -> Result<Self, BenchError> {
        let mut config = Config::parse(text)?;
        let mut echo = text.to_string();
        if !echo.is_empty() && !echo.ends_with('\n') {
            echo.push('\n');
        }
        if let Some(seed) = overrides.seed {
            config.set("seed", seed);
            echo.push_str(&format!("# override: seed = {seed}\n"));
        }
        if let Some(out) = &overrides.out {
            config.set("out", out.display());
            echo.push_str(&format!("# override: out = {}\n", out.display()));
        }
        let method = if need_method || config.raw("", "method").is_some() { Some(config.method()?) } else { None };
        let seed: u64 = config.get("", "seed", 0)?;
        let default_out = format!("results/{}", method.as_deref().unwrap_or("truth"));
        let out: String = config.get("", "out", default_out)?;
        let sim = SimSetup::from_config(&mut config)?;
        let plan = match &method {
            Some(m) => Some(Plan::from_config(m, &mut config, &sim, seed)?),
            None => None,
        };
        config.check_consumed()?;
        Ok(Self { method, seed, out: PathBuf::from(out), sim, plan, config, echo })
    }

    fn prepare_dir(&self) -> Result<(), BenchError> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        write(&self.out.join(CONFIG_ECHO_FILE), self.echo.as_bytes())?;
        let manifest = manifest_text(self.method.as_deref().unwrap_or("none"), self.seed, &self.config.hash(), self.config.resolved());
        write(&self.out.join(MANIFEST_FILE), manifest.as_bytes())
    }

    fn truth(&self) -> Result<peml_core::sim::Trajectory, BenchError> {
        let truth = self.sim.simulate()?;
        let mut buf = Vec::new();
        truth.write_csv(&mut buf)?;
        write(&self.out.join(TRUTH_FILE), &buf)?;
        Ok(truth)
    }

    /// Ground truth only.
    pub fn simulate(&self) -> Result<PathBuf, BenchError> {
        self.prepare_dir()?;
        self.truth()?;
        Ok(self.out.join(TRUTH_FILE))
    }

    /// Runs the method. Artifacts written before a failure stay on disk and
    /// the report records the failure.
    pub fn run(&self) -> Result<MetricReport, BenchError> {
        let method = self.method.clone().ok_or_else(|| BenchError::field("method", "required but missing"))?;
        let plan = self.plan.as_ref().expect("plan exists whenever method does");
        self.prepare_dir()?;
        let mut report = MetricReport { method, seed: self.seed, config_hash: self.config.hash(), status: "running".into(), ..Default::default() };
        let start = Instant::now();
        let outcome = self.truth().and_then(|truth| Ok(execute(plan, &self.sim, &truth, self.seed)?));
        report.wall_time_s = start.elapsed().as_secs_f64();
        match outcome {
            Ok(out) => {
                for (name, bytes) in &out.files {
                    write(&self.out.join(name), bytes)?;
                }
                report.status = "ok".into();
                report.components = out.components;
                report.params = out.params;
                report.extra = out.extra.into_iter().collect();
                write(&self.out.join(REPORT_FILE), report.to_text().as_bytes())?;
                Ok(report)
            }
            Err(e) => {
                report.status = format!("failed: {}", e.to_string().replace('\n', " "));
                write(&self.out.join(REPORT_FILE), report.to_text().as_bytes())?;
                Err(e)
            }
        }
    }
}

pub fn load_file(path: &Path, overrides: &Overrides, need_method: bool) -> Result<Experiment, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Experiment::load(&text, overrides, need_method)
}

/// One aligned table over the reports found in `dirs`. Directories without
/// a readable report are skipped and returned as warnings.
pub fn compare(dirs: &[PathBuf]) -> (String, Vec<String>) {
    let mut warnings = Vec::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for d in dirs {
        match MetricReport::load(d) {
            Ok(r) => rows.push(table_row(d, &r)),
            Err(e) => warnings.push(format!("skipping {}: {e}", d.display())),
        }
    }
    let header: Vec<String> = ["dir", "method", "status", "rmse_u", "nmse_u", "rmse_v", "nmse_v", "max_param_err_%", "wall_s"].iter().map(|s| s.to_string()).collect();
    (render(&header, &rows), warnings)
}

fn num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.4e}"),
        _ => "-".into(),
    }
}

fn table_row(dir: &Path, r: &MetricReport) -> Vec<String> {
    let c = |name: &str| r.component(name);
    let max_err = r.params.iter().map(|p| p.percent_error).fold(None, |a: Option<f64>, e| Some(a.map_or(e, |a| a.max(e))));
    vec![
        dir.display().to_string(),
        r.method.clone(),
        r.status.clone(),
        num(c("u").map(|c| c.rmse)),
        num(c("u").map(|c| c.nmse)),
        num(c("v").map(|c| c.rmse)),
        num(c("v").map(|c| c.nmse)),
        max_err.map_or("-".into(), |e| format!("{e:.3}")),
        format!("{:.2}", r.wall_time_s),
    ]
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut s = line(header);
    for r in rows {
        s.push_str(&line(r));
    }
    s
}
