//! Gaussian-process regression of a signal against time with a squared
//! exponential kernel, a kernel derived from a white-noise-driven linear
//! oscillator, or their sum.

use crate::metrics::{coverage, mean, rmse};
use crate::numkit::{cholesky_with_jitter, Cholesky, DenseMatrix, RngStream};
use crate::nn::{Adam, AdamConfig};
use crate::sim::Trajectory;
use crate::{Error, Result};

/// Known physics of the oscillator behind the SDOF kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdofPhysics {
    pub m: f64,
    pub c: f64,
    pub k: f64,
}

impl SdofPhysics {
    pub fn natural_frequency(&self) -> f64 {
        (self.k / self.m).sqrt()
    }

    pub fn damping_ratio(&self) -> f64 {
        self.c / (2.0 * (self.k * self.m).sqrt())
    }

    /// (ω_n, ζ, ω_d); errors for ζ ≥ 1.
    pub fn modal(&self) -> Result<(f64, f64, f64)> {
        let (wn, z) = (self.natural_frequency(), self.damping_ratio());
        if !(z < 1.0) || !(z > 0.0) || !wn.is_finite() {
            return Err(Error::Overdamped { zeta: z });
        }
        Ok((wn, z, wn * (1.0 - z * z).sqrt()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind {
    /// α²·exp(−τ²/(2l²)).
    Se { l: f64, alpha: f64 },
    /// Autocorrelation of the oscillator's response to white forcing of
    /// variance σ_f².
    Sdof { sigma_f: f64, physics: SdofPhysics },
    Sum(Vec<KernelKind>),
}

impl KernelKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelKind::Se { l, alpha } => {
                if !(*l > 0.0 && *alpha > 0.0) {
                    return Err(Error::InvalidParam(format!("SE kernel needs l > 0 and alpha > 0, got l={l}, alpha={alpha}")));
                }
            }
            KernelKind::Sdof { sigma_f, physics } => {
                if !(*sigma_f > 0.0) {
                    return Err(Error::InvalidParam(format!("SDOF kernel needs sigma_f > 0, got {sigma_f}")));
                }
                physics.modal()?;
            }
            KernelKind::Sum(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidParam("empty kernel sum".into()));
                }
                parts.iter().try_for_each(KernelKind::validate)?;
            }
        }
        Ok(())
    }

    /// k(τ); assumes a validated kernel.
    pub fn at(&self, tau: f64) -> f64 {
        match self {
            KernelKind::Se { l, alpha } => alpha * alpha * (-tau * tau / (2.0 * l * l)).exp(),
            KernelKind::Sdof { sigma_f, physics } => {
                let (wn, z, wd) = physics.modal().expect("validated kernel");
                let a = tau.abs();
                sigma_f * sigma_f / (4.0 * physics.m * physics.m * z * wn.powi(3))
                    * (-z * wn * a).exp()
                    * ((wd * tau).cos() + z * wn / wd * (wd * a).sin())
            }
            KernelKind::Sum(parts) => parts.iter().map(|p| p.at(tau)).sum(),
        }
    }

    pub fn n_hyper(&self) -> usize {
        match self {
            KernelKind::Se { .. } => 2,
            KernelKind::Sdof { .. } => 1,
            KernelKind::Sum(parts) => parts.iter().map(KernelKind::n_hyper).sum(),
        }
    }

    /// Log hyperparameters: (ln l, ln α) for SE, ln σ_f for SDOF.
    pub fn log_hyper(&self) -> Vec<f64> {
        match self {
            KernelKind::Se { l, alpha } => vec![l.ln(), alpha.ln()],
            KernelKind::Sdof { sigma_f, .. } => vec![sigma_f.ln()],
            KernelKind::Sum(parts) => parts.iter().flat_map(KernelKind::log_hyper).collect(),
        }
    }

    pub fn with_log_hyper(&self, h: &[f64]) -> Self {
        match self {
            KernelKind::Se { .. } => KernelKind::Se { l: h[0].exp(), alpha: h[1].exp() },
            KernelKind::Sdof { physics, .. } => KernelKind::Sdof { sigma_f: h[0].exp(), physics: *physics },
            KernelKind::Sum(parts) => {
                let mut off = 0;
                KernelKind::Sum(
                    parts
                        .iter()
                        .map(|p| {
                            let n = p.n_hyper();
                            let q = p.with_log_hyper(&h[off..off + n]);
                            off += n;
                            q
                        })
                        .collect(),
                )
            }
        }
    }

    /// ∂k(τ)/∂(log hyperparameters), in `log_hyper` order.
    pub fn grad_at(&self, tau: f64) -> Vec<f64> {
        match self {
            KernelKind::Se { l, .. } => {
                let k = self.at(tau);
                vec![k * tau * tau / (l * l), 2.0 * k]
            }
            KernelKind::Sdof { .. } => vec![2.0 * self.at(tau)],
            KernelKind::Sum(parts) => parts.iter().flat_map(|p| p.grad_at(tau)).collect(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            KernelKind::Se { .. } => "se".into(),
            KernelKind::Sdof { .. } => "sdof".into(),
            KernelKind::Sum(parts) => parts.iter().map(KernelKind::name).collect::<Vec<_>>().join("+"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub noise_var: f64,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(Error::InvalidParam(format!("noise variance must be finite and nonnegative, got {}", self.noise_var)));
        }
        Ok(())
    }

    /// Kernel hyperparameters then ln σ_n².
    pub fn log_hyper(&self) -> Vec<f64> {
        let mut h = self.kind.log_hyper();
        h.push(self.noise_var.ln());
        h
    }

    pub fn with_log_hyper(&self, h: &[f64]) -> Self {
        let n = self.kind.n_hyper();
        Self { kind: self.kind.with_log_hyper(&h[..n]), noise_var: h[n].exp() }
    }
}

pub fn kernel_eval(spec: &KernelSpec, t: f64, tp: f64) -> Result<f64> {
    spec.kind.validate()?;
    Ok(spec.kind.at(t - tp))
}

/// K(a, b) without noise.
pub fn gram(kind: &KernelKind, a: &[f64], b: &[f64]) -> DenseMatrix {
    let mut k = DenseMatrix::zeros(a.len(), b.len());
    for (i, ta) in a.iter().enumerate() {
        for (j, tb) in b.iter().enumerate() {
            k.set(i, j, kind.at(ta - tb));
        }
    }
    k
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpOptConfig {
    pub restarts: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for GpOptConfig {
    fn default() -> Self {
        Self { restarts: 8, steps: 200, lr: 0.05, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GpModel {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub spec: KernelSpec,
    pub chol: Cholesky,
    pub jitter: f64,
    /// (K + σ_n²I)⁻¹y.
    pub weights: Vec<f64>,
    pub log_marginal: f64,
}

fn condition(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<GpModel> {
    let mut k = gram(&spec.kind, x, x);
    k.add_diag(spec.noise_var);
    let (chol, jitter) = cholesky_with_jitter(&k)?;
    let weights = chol.solve(y);
    let n = x.len() as f64;
    let fit: f64 = y.iter().zip(&weights).map(|(a, b)| a * b).sum();
    let log_marginal = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    Ok(GpModel { x: x.to_vec(), y: y.to_vec(), spec: spec.clone(), chol, jitter, weights, log_marginal })
}

/// Log marginal likelihood and its gradient in `spec.log_hyper()` order.
pub fn log_marginal_and_grad(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<(f64, Vec<f64>)> {
    let model = condition(x, y, spec)?;
    let n = x.len();
    let kinv = model.chol.inverse();
    let a = &model.weights;
    let nh = spec.kind.n_hyper();
    let mut g = vec![0.0; nh + 1];
    for i in 0..n {
        for j in 0..n {
            let w = a[i] * a[j] - kinv.get(i, j);
            let dk = spec.kind.grad_at(x[i] - x[j]);
            for (gh, d) in g.iter_mut().zip(&dk) {
                *gh += 0.5 * w * d;
            }
            if i == j {
                g[nh] += 0.5 * w * spec.noise_var;
            }
        }
    }
    Ok((model.log_marginal, g))
}

fn random_start(spec: &KernelSpec, y: &[f64], rng: &mut RngStream) -> KernelSpec {
    let var = crate::metrics::variance(y).max(1e-300);
    fn draw(kind: &KernelKind, var: f64, rng: &mut RngStream) -> KernelKind {
        match kind {
            KernelKind::Se { .. } => KernelKind::Se { l: rng.uniform_in(0.1f64.ln(), 10f64.ln()).exp(), alpha: var.sqrt() * rng.uniform_in(-1.0, 1.0).exp() },
            KernelKind::Sdof { physics, .. } => {
                let (wn, z, _) = physics.modal().expect("validated kernel");
                let unit = 1.0 / (4.0 * physics.m * physics.m * z * wn.powi(3));
                KernelKind::Sdof { sigma_f: (var / unit).sqrt() * rng.uniform_in(-1.0, 1.0).exp(), physics: *physics }
            }
            KernelKind::Sum(parts) => KernelKind::Sum(parts.iter().map(|p| draw(p, var / parts.len() as f64, rng)).collect()),
        }
    }
    KernelSpec { kind: draw(&spec.kind, var, rng), noise_var: var * rng.uniform_in(-12.0, -2.0).exp() }
}

/// Builds the model at `spec`, or at the best of several log-space gradient
/// ascents on the log marginal likelihood when `optimize` is given (the first
/// restart starts at `spec`).
pub fn fit(x: &[f64], y: &[f64], spec: &KernelSpec, optimize: Option<&GpOptConfig>) -> Result<GpModel> {
    spec.validate()?;
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::InvalidParam(format!("need at least two paired training points, got {} inputs and {} targets", x.len(), y.len())));
    }
    let Some(opt) = optimize else {
        return condition(x, y, spec);
    };
    let mut rng = RngStream::new(opt.seed).substream("gp-restarts");
    let mut best: Option<GpModel> = None;
    for r in 0..opt.restarts.max(1) {
        let start = if r == 0 { spec.clone() } else { random_start(spec, y, &mut rng) };
        let mut h = start.log_hyper();
        let mut adam = Adam::new(AdamConfig { lr: opt.lr, ..AdamConfig::default() }, h.len());
        let mut last_good = h.clone();
        for _ in 0..opt.steps {
            match log_marginal_and_grad(x, y, &spec.with_log_hyper(&h)) {
                Ok((lml, g)) if lml.is_finite() && g.iter().all(|v| v.is_finite()) => {
                    last_good.copy_from_slice(&h);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    adam.step(&mut h, &neg);
                }
                _ => {
                    h.copy_from_slice(&last_good);
                    break;
                }
            }
        }
        let cand = match condition(x, y, &spec.with_log_hyper(&h)) {
            Ok(m) if m.log_marginal.is_finite() => m,
            _ => continue,
        };
        if best.as_ref().map(|b| cand.log_marginal > b.log_marginal).unwrap_or(true) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::Num(crate::numkit::NumError::NonFinite { node: 0 }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDist {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn predict(model: &GpModel, query: &[f64]) -> PredictiveDist {
    let ks = gram(&model.spec.kind, query, &model.x);
    let k0 = model.spec.kind.at(0.0);
    let mut mean = Vec::with_capacity(query.len());
    let mut sd = Vec::with_capacity(query.len());
    for i in 0..query.len() {
        let row = ks.row(i);
        mean.push(row.iter().zip(&model.weights).map(|(a, b)| a * b).sum());
        let v = model.chol.forward_sub(row);
        let var = k0 - v.iter().map(|x| x * x).sum::<f64>();
        sd.push(var.max(0.0).sqrt());
    }
    let lower = mean.iter().zip(&sd).map(|(m, s)| m - 2.0 * s).collect();
    let upper = mean.iter().zip(&sd).map(|(m, s)| m + 2.0 * s).collect();
    PredictiveDist { mean, sd, lower, upper }
}

#[derive(Clone, Debug)]
pub struct GpOutcome {
    pub model: GpModel,
    pub pred: PredictiveDist,
    pub rmse: f64,
    pub mean_sd: f64,
    pub coverage: f64,
}

/// Trains on every `stride`-th displacement sample and scores the dense grid.
pub fn run_gp_task(traj: &Trajectory, stride: usize, spec: &KernelSpec, opt: Option<&GpOptConfig>) -> Result<GpOutcome> {
    let (domain, _) = crate::sim::subsample(traj, crate::sim::Selection::Stride(stride))?;
    let x: Vec<f64> = domain.observation.iter().map(|&i| traj.t[i]).collect();
    let y: Vec<f64> = domain.observation.iter().map(|&i| traj.u[i]).collect();
    let model = fit(&x, &y, spec, opt)?;
    let pred = predict(&model, &traj.t);
    Ok(GpOutcome {
        rmse: rmse(&pred.mean, &traj.u),
        mean_sd: mean(&pred.sd),
        coverage: coverage(&pred.mean, &pred.sd, &traj.u, 2.0),
        model,
        pred,
    })
}

pub fn write_csv<W: std::io::Write>(w: W, traj: &Trajectory, pred: &PredictiveDist) -> Result<()> {
    crate::io::write_columns(w, &["t", "u_true", "mean", "sd"], &[&traj.t, &traj.u, &pred.mean, &pred.sd])
}
