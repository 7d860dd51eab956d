//! Sparse regression over a dictionary of candidate functions of (u, v, f).

use crate::numkit::{lstsq, DenseMatrix};
use crate::sim::Trajectory;
use crate::{Error, Result};

/// A candidate function: the constant, a monomial u^pu·v^pv, or the force.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    One,
    Monomial { pu: u32, pv: u32 },
    Force,
}

impl Feature {
    pub fn name(&self) -> String {
        let pow = |s: &str, p: u32| match p {
            0 => None,
            1 => Some(s.to_string()),
            _ => Some(format!("{s}^{p}")),
        };
        match self {
            Feature::One => "1".into(),
            Feature::Force => "f".into(),
            Feature::Monomial { pu, pv } => [pow("u", *pu), pow("v", *pv)].into_iter().flatten().collect::<Vec<_>>().join("*"),
        }
    }

    pub fn eval(&self, u: f64, v: f64, f: f64) -> f64 {
        match self {
            Feature::One => 1.0,
            Feature::Force => f,
            Feature::Monomial { pu, pv } => u.powi(*pu as i32) * v.powi(*pv as i32),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        match s {
            "1" => return Some(Feature::One),
            "f" => return Some(Feature::Force),
            _ => {}
        }
        let (mut pu, mut pv) = (0, 0);
        for factor in s.split('*') {
            let (base, p) = match factor.split_once('^') {
                Some((b, p)) => (b, p.parse().ok()?),
                None => (factor, 1),
            };
            match base {
                "u" => pu += p,
                "v" => pv += p,
                _ => return None,
            }
        }
        if pu + pv == 0 {
            return None;
        }
        Some(Feature::Monomial { pu, pv })
    }
}

/// {1, u, v, u², u·v, v², u³, u²v, u·v², v³, f}.
pub fn default_features() -> Vec<Feature> {
    let mut out = vec![Feature::One];
    for deg in 1..=3 {
        for pv in 0..=deg {
            out.push(Feature::Monomial { pu: deg - pv, pv });
        }
    }
    out.push(Feature::Force);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateLibrary {
    pub features: Vec<Feature>,
    pub names: Vec<String>,
    /// n_samples × n_features.
    pub theta: DenseMatrix,
}

impl CandidateLibrary {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// The library restricted to the columns in `keep`.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let n = self.theta.rows();
        let mut data = Vec::with_capacity(n * keep.len());
        for r in 0..n {
            data.extend(keep.iter().map(|&c| self.theta.get(r, c)));
        }
        Self {
            features: keep.iter().map(|&c| self.features[c]).collect(),
            names: keep.iter().map(|&c| self.names[c].clone()).collect(),
            theta: DenseMatrix::from_vec(n, keep.len(), data),
        }
    }
}

pub fn build_library(traj: &Trajectory, features: &[Feature]) -> Result<CandidateLibrary> {
    if traj.len() == 0 {
        return Err(Error::EmptySelection("library needs a nonempty trajectory".into()));
    }
    let names: Vec<String> = features.iter().map(Feature::name).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::InvalidParam(format!("duplicate feature {n}")));
        }
    }
    let mut data = Vec::with_capacity(traj.len() * features.len());
    for r in 0..traj.len() {
        for (feat, name) in features.iter().zip(&names) {
            let x = feat.eval(traj.u[r], traj.v[r], traj.f[r]);
            if !x.is_finite() {
                return Err(Error::NonFiniteFeature { feature: name.clone(), row: r });
            }
            data.push(x);
        }
    }
    Ok(CandidateLibrary { features: features.to_vec(), names, theta: DenseMatrix::from_vec(traj.len(), features.len(), data) })
}

/// Central-difference estimate of u̇ → ü from sampled velocity; one-sided at
/// the ends.
pub fn central_difference(x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| match (i, n) {
            (_, 0 | 1) => 0.0,
            (0, _) => (x[1] - x[0]) / h,
            (i, n) if i == n - 1 => (x[i] - x[i - 1]) / h,
            (i, _) => (x[i + 1] - x[i - 1]) / (2.0 * h),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StlsqConfig {
    /// Applied to coefficients of unit-norm columns.
    pub threshold: f64,
    pub ridge: f64,
    pub max_iter: usize,
}

impl Default for StlsqConfig {
    fn default() -> Self {
        Self { threshold: 0.1, ridge: 0.0, max_iter: 20 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseCoefficients {
    pub names: Vec<String>,
    pub xi: Vec<f64>,
    pub support: Vec<bool>,
    pub iterations: usize,
    /// Set when thresholding removed every feature.
    pub empty_support: bool,
}

impl SparseCoefficients {
    pub fn active(&self) -> Vec<&str> {
        self.names.iter().zip(&self.support).filter(|(_, s)| **s).map(|(n, _)| n.as_str()).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.xi[i])
    }

    /// e.g. `m*a = -15 u - 1 v - 100 u^3 + 1 f` (six decimals).
    pub fn equation(&self, lhs: &str) -> String {
        let mut rhs = String::new();
        for (n, x) in self.names.iter().zip(&self.xi).filter(|(_, x)| **x != 0.0) {
            let sign = match (rhs.is_empty(), *x < 0.0) {
                (true, true) => "-",
                (true, false) => "",
                (false, true) => " - ",
                (false, false) => " + ",
            };
            rhs.push_str(sign);
            rhs.push_str(&format!("{:.6}", x.abs()));
            if n != "1" {
                rhs.push(' ');
                rhs.push_str(n);
            }
        }
        if rhs.is_empty() {
            rhs.push('0');
        }
        format!("{lhs} = {rhs}")
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["feature", "coefficient"])?;
        for (n, x) in self.names.iter().zip(&self.xi) {
            out.write_record([n.clone(), crate::io::fmt_real(*x)])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn solve_support(cols: &[Vec<f64>], y: &[f64], active: &[usize], ridge: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let k = active.len();
    let extra = if ridge > 0.0 { k } else { 0 };
    let mut a = DenseMatrix::zeros(n + extra, k);
    for (j, &c) in active.iter().enumerate() {
        for r in 0..n {
            a.set(r, j, cols[c][r]);
        }
        if extra > 0 {
            a.set(n + j, j, ridge.sqrt());
        }
    }
    let mut b = y.to_vec();
    b.extend(std::iter::repeat_n(0.0, extra));
    Ok(lstsq(&a, &b)?)
}

/// Sequentially thresholded least squares on unit-ℓ2 columns; coefficients
/// are returned in the original column scale.
pub fn stlsq(lib: &CandidateLibrary, y: &[f64], cfg: &StlsqConfig) -> Result<SparseCoefficients> {
    if !(cfg.threshold >= 0.0) {
        return Err(Error::InvalidParam(format!("threshold must be nonnegative, got {}", cfg.threshold)));
    }
    if !(cfg.ridge >= 0.0) {
        return Err(Error::InvalidParam(format!("ridge must be nonnegative, got {}", cfg.ridge)));
    }
    let (n, p) = lib.theta.shape();
    if y.len() != n {
        return Err(Error::InvalidParam(format!("target has {} rows, library {n}", y.len())));
    }
    let norms: Vec<f64> = (0..p).map(|c| lib.theta.col_vec(c).iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|c| {
            let s = if norms[c] > 0.0 { 1.0 / norms[c] } else { 0.0 };
            lib.theta.col_vec(c).iter().map(|x| x * s).collect()
        })
        .collect();
    let mut active: Vec<usize> = (0..p).filter(|&c| norms[c] > 0.0).collect();
    let mut coef = vec![0.0; p];
    let mut iterations = 0;
    while iterations < cfg.max_iter && !active.is_empty() {
        iterations += 1;
        let sol = solve_support(&cols, y, &active, cfg.ridge)?;
        coef.iter_mut().for_each(|c| *c = 0.0);
        for (j, &c) in active.iter().enumerate() {
            coef[c] = sol[j];
        }
        let kept: Vec<usize> = active.iter().copied().filter(|&c| coef[c].abs() >= cfg.threshold).collect();
        if kept.len() == active.len() {
            break;
        }
        if kept.is_empty() {
            active.clear();
            break;
        }
        active = kept;
        if iterations == cfg.max_iter {
            // final re-solve on the surviving support
            let sol = solve_support(&cols, y, &active, cfg.ridge)?;
            coef.iter_mut().for_each(|c| *c = 0.0);
            for (j, &c) in active.iter().enumerate() {
                coef[c] = sol[j];
            }
        }
    }
    let support: Vec<bool> = (0..p).map(|c| active.contains(&c)).collect();
    let xi: Vec<f64> = (0..p).map(|c| if support[c] { coef[c] / norms[c] } else { 0.0 }).collect();
    Ok(SparseCoefficients { names: lib.names.clone(), xi, support, iterations, empty_support: active.is_empty() })
}

/// Regresses m·ü (or any scaled target) from the trajectory's acceleration.
pub fn identify(traj: &Trajectory, features: &[Feature], target_scale: f64, cfg: &StlsqConfig) -> Result<SparseCoefficients> {
    let lib = build_library(traj, features)?;
    let y: Vec<f64> = traj.a.iter().map(|a| a * target_scale).collect();
    stlsq(&lib, &y, cfg)
}
