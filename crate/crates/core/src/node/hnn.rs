//! Separable Hamiltonian networks H(q, p) = T(p) + V(q) and symplectic
//! stepping.

use crate::nn::{mlp_forward_tangent, train, Activation, MlpSpec, MlpVars, TrainConfig};
use crate::numkit::{grad, DenseMatrix, RngStream, Tape, Var};
use crate::sim::{simulate_with, ForcingSpec, OscillatorParams, SimConfig};
use crate::{Error, Result};

/// A Hamiltonian of the form T(p) + V(q).
pub trait Separable {
    fn kinetic(&self, p: f64) -> f64;
    fn potential(&self, q: f64) -> f64;
    /// ∂H/∂p.
    fn dh_dp(&self, p: f64) -> f64;
    /// ∂H/∂q.
    fn dh_dq(&self, q: f64) -> f64;

    fn energy(&self, q: f64, p: f64) -> f64 {
        self.kinetic(p) + self.potential(q)
    }
}

/// p²/(2m) + k q²/2 + k3 q⁴/4.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DuffingHamiltonian {
    pub m: f64,
    pub k: f64,
    pub k3: f64,
}

impl DuffingHamiltonian {
    pub fn from_params(p: &OscillatorParams) -> Self {
        Self { m: p.m, k: p.k, k3: p.k3 }
    }
}

impl Separable for DuffingHamiltonian {
    fn kinetic(&self, p: f64) -> f64 {
        p * p / (2.0 * self.m)
    }
    fn potential(&self, q: f64) -> f64 {
        0.5 * self.k * q * q + 0.25 * self.k3 * q.powi(4)
    }
    fn dh_dp(&self, p: f64) -> f64 {
        p / self.m
    }
    fn dh_dq(&self, q: f64) -> f64 {
        self.k * q + self.k3 * q.powi(3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymplecticScheme {
    /// q and p both from step-k gradients (not symplectic).
    Explicit,
    /// p first, then q from the updated p.
    SymplecticEuler,
    /// Half kick, drift, half kick.
    Leapfrog,
}

pub fn symplectic_step(h_fn: &impl Separable, (q, p): (f64, f64), h: f64, scheme: SymplecticScheme) -> (f64, f64) {
    match scheme {
        SymplecticScheme::Explicit => (q + h * h_fn.dh_dp(p), p - h * h_fn.dh_dq(q)),
        SymplecticScheme::SymplecticEuler => {
            let p1 = p - h * h_fn.dh_dq(q);
            (q + h * h_fn.dh_dp(p1), p1)
        }
        SymplecticScheme::Leapfrog => {
            let ph = p - 0.5 * h * h_fn.dh_dq(q);
            let q1 = q + h * h_fn.dh_dp(ph);
            (q1, ph - 0.5 * h * h_fn.dh_dq(q1))
        }
    }
}

/// Central-difference Jacobian of one step, rows (q, p).
pub fn step_jacobian(h_fn: &impl Separable, z: (f64, f64), h: f64, scheme: SymplecticScheme, eps: f64) -> [[f64; 2]; 2] {
    let mut j = [[0.0; 2]; 2];
    for c in 0..2 {
        let (mut zp, mut zm) = (z, z);
        if c == 0 {
            zp.0 += eps;
            zm.0 -= eps;
        } else {
            zp.1 += eps;
            zm.1 -= eps;
        }
        let (a, b) = (symplectic_step(h_fn, zp, h, scheme), symplectic_step(h_fn, zm, h, scheme));
        j[0][c] = (a.0 - b.0) / (2.0 * eps);
        j[1][c] = (a.1 - b.1) / (2.0 * eps);
    }
    j
}

/// Largest entry of |JᵀΩJ − Ω| with Ω = [[0, 1], [−1, 0]].
pub fn symplectic_defect(j: &[[f64; 2]; 2]) -> f64 {
    // for 2×2 maps JᵀΩJ = det(J)·Ω
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    (det - 1.0).abs()
}

/// Trajectory and energies of `steps` steps from `z0`.
pub fn integrate(h_fn: &impl Separable, z0: (f64, f64), h: f64, steps: usize, scheme: SymplecticScheme) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut zs = Vec::with_capacity(steps + 1);
    let mut es = Vec::with_capacity(steps + 1);
    let mut z = z0;
    zs.push(z);
    es.push(h_fn.energy(z.0, z.1));
    for _ in 0..steps {
        z = symplectic_step(h_fn, z, h, scheme);
        zs.push(z);
        es.push(h_fn.energy(z.0, z.1));
    }
    (zs, es)
}

/// max_k |H_k − H_0| / |H_0|.
pub fn energy_drift(energies: &[f64]) -> f64 {
    let e0 = energies[0];
    energies.iter().fold(0.0f64, |a, e| a.max((e - e0).abs())) / e0.abs().max(f64::MIN_POSITIVE)
}

/// H(q, p) = s_H·(T̃(p/s_p) + Ṽ(q/s_q)) with scalar-output networks T̃, Ṽ.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianNet {
    pub t_spec: MlpSpec,
    pub v_spec: MlpSpec,
    pub theta_t: Vec<f64>,
    pub theta_v: Vec<f64>,
    /// Mass used for p = m·v.
    pub mass: f64,
    pub q_scale: f64,
    pub p_scale: f64,
    pub h_scale: f64,
}

impl HamiltonianNet {
    pub fn new(t_spec: MlpSpec, v_spec: MlpSpec, mass: f64, scales: [f64; 3], rng: &mut RngStream) -> Result<Self> {
        for s in [&t_spec, &v_spec] {
            if s.input_dim() != 1 || s.output_dim() != 1 {
                return Err(Error::InvalidParam("Hamiltonian sub-networks must be scalar to scalar".into()));
            }
        }
        if !(mass > 0.0) || scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParam("mass and scales must be positive".into()));
        }
        let theta_t = t_spec.init(&mut rng.substream("T"));
        let theta_v = v_spec.init(&mut rng.substream("V"));
        Ok(Self { t_spec, v_spec, theta_t, theta_v, mass, q_scale: scales[0], p_scale: scales[1], h_scale: scales[2] })
    }

    pub fn n_params(&self) -> usize {
        self.theta_t.len() + self.theta_v.len()
    }

    pub fn params(&self) -> Vec<f64> {
        [self.theta_t.as_slice(), self.theta_v.as_slice()].concat()
    }

    pub fn with_params(&self, theta: &[f64]) -> Self {
        let nt = self.theta_t.len();
        Self { theta_t: theta[..nt].to_vec(), theta_v: theta[nt..].to_vec(), ..self.clone() }
    }

    /// (T or V, its derivative) on the tape for a column of raw inputs.
    fn branch(&self, tape: &mut Tape, vars: &MlpVars, spec: &MlpSpec, x: &[f64], scale: f64) -> (Var, Var) {
        let xn = tape.constant(DenseMatrix::column(&x.iter().map(|v| v / scale).collect::<Vec<_>>()));
        let dx = tape.constant(DenseMatrix::filled(x.len(), 1, 1.0 / scale));
        let (y, dy) = mlp_forward_tangent(tape, spec, vars, xn, dx);
        (tape.scale(y, self.h_scale), tape.scale(dy, self.h_scale))
    }

    fn eval_branch(&self, t_branch: bool, x: f64) -> (f64, f64) {
        let mut tape = Tape::new();
        let (spec, theta, scale) = if t_branch { (&self.t_spec, &self.theta_t, self.p_scale) } else { (&self.v_spec, &self.theta_v, self.q_scale) };
        let vars = MlpVars::constants(&mut tape, spec, theta);
        let (y, dy) = self.branch(&mut tape, &vars, spec, &[x], scale);
        (tape.scalar(y), tape.scalar(dy))
    }

    /// Learned vector field (∂H/∂p, −∂H/∂q) at a batch of points.
    pub fn vector_field(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let tv = MlpVars::constants(&mut tape, &self.t_spec, &self.theta_t);
        let vv = MlpVars::constants(&mut tape, &self.v_spec, &self.theta_v);
        let (_, dt) = self.branch(&mut tape, &tv, &self.t_spec, p, self.p_scale);
        let (_, dv) = self.branch(&mut tape, &vv, &self.v_spec, q, self.q_scale);
        (tape.value(dt).as_slice().to_vec(), tape.value(dv).as_slice().iter().map(|x| -x).collect())
    }
}

impl Separable for HamiltonianNet {
    fn kinetic(&self, p: f64) -> f64 {
        self.eval_branch(true, p).0
    }
    fn potential(&self, q: f64) -> f64 {
        self.eval_branch(false, q).0
    }
    fn dh_dp(&self, p: f64) -> f64 {
        self.eval_branch(true, p).1
    }
    fn dh_dq(&self, q: f64) -> f64 {
        self.eval_branch(false, q).1
    }
}

/// Phase-space samples with their time derivatives.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HnnBatch {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub q_dot: Vec<f64>,
    pub p_dot: Vec<f64>,
}

impl HnnBatch {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Samples of free, undamped trajectories started at rest from each
    /// displacement in `starts`.
    pub fn conservative(params: &OscillatorParams, starts: &[f64], grid: &SimConfig) -> Result<Self> {
        let cons = OscillatorParams { c: 0.0, ..*params };
        let mut b = Self::default();
        for &u0 in starts {
            let tr = simulate_with(&cons, &ForcingSpec::zero(), &SimConfig { z0: [u0, 0.0], ..*grid })?;
            b.q.extend_from_slice(&tr.u);
            b.p.extend(tr.v.iter().map(|v| cons.m * v));
            b.q_dot.extend_from_slice(&tr.v);
            b.p_dot.extend(tr.a.iter().map(|a| cons.m * a));
        }
        Ok(b)
    }
}

/// Residual columns (∂H/∂p − q̇, ∂H/∂q + ṗ), each divided by `scale`.
fn residuals(tape: &mut Tape, net: &HamiltonianNet, theta: &[f64], leaf: bool, batch: &HnnBatch, scale: [f64; 2]) -> (Var, Var, MlpVars, MlpVars) {
    let nt = net.theta_t.len();
    let (tv, vv) = if leaf {
        (MlpVars::leaves(tape, &net.t_spec, &theta[..nt]), MlpVars::leaves(tape, &net.v_spec, &theta[nt..]))
    } else {
        (MlpVars::constants(tape, &net.t_spec, &theta[..nt]), MlpVars::constants(tape, &net.v_spec, &theta[nt..]))
    };
    let (_, dt) = net.branch(tape, &tv, &net.t_spec, &batch.p, net.p_scale);
    let (_, dv) = net.branch(tape, &vv, &net.v_spec, &batch.q, net.q_scale);
    let qd = tape.constant(DenseMatrix::column(&batch.q_dot));
    let pd = tape.constant(DenseMatrix::column(&batch.p_dot));
    let r1 = tape.sub(dt, qd);
    let r2 = tape.add(dv, pd);
    (tape.scale(r1, 1.0 / scale[0]), tape.scale(r2, 1.0 / scale[1]), tv, vv)
}

fn flat(tv: &MlpVars, vv: &MlpVars, g: &crate::numkit::Gradients) -> Vec<f64> {
    let mut out = tv.flat_grad(g);
    out.extend(vv.flat_grad(g));
    out
}

/// Batch mean of ‖(∂H/∂p − q̇, ∂H/∂q + ṗ)‖₂, with its gradient in
/// `net.params()` layout.
pub fn hnn_loss(net: &HamiltonianNet, batch: &HnnBatch) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptySelection("Hamiltonian loss needs a nonempty batch".into()));
    }
    let mut tape = Tape::new();
    let (r1, r2, tv, vv) = residuals(&mut tape, net, &net.params(), true, batch, [1.0, 1.0]);
    let s1 = tape.square(r1);
    let s2 = tape.square(r2);
    let s = tape.add(s1, s2);
    let n = tape.sqrt(s);
    let loss = tape.mean(n);
    let g = grad(&tape, loss)?;
    Ok((tape.scalar(loss), flat(&tv, &vv, &g)))
}

/// Batch mean of ‖(∂H/∂p − q̇, ∂H/∂q + ṗ)‖₂ for any separable Hamiltonian.
pub fn hnn_loss_value(h_fn: &impl Separable, batch: &HnnBatch) -> f64 {
    let s: f64 = (0..batch.len()).map(|i| (h_fn.dh_dp(batch.p[i]) - batch.q_dot[i]).hypot(h_fn.dh_dq(batch.q[i]) + batch.p_dot[i])).sum();
    s / batch.len().max(1) as f64
}

/// Mean squared residual with each component in units of its data spread;
/// the smooth surrogate used for training.
pub fn hnn_training_loss(net: &HamiltonianNet, theta: &[f64], batch: &HnnBatch, scale: [f64; 2]) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let (r1, r2, tv, vv) = residuals(&mut tape, net, theta, true, batch, scale);
    let r = tape.concat_cols(&[r1, r2]);
    let loss = tape.mean_sq_norm(r);
    let g = grad(&tape, loss)?;
    Ok((tape.scalar(loss), flat(&tv, &vv, &g)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HnnConfig {
    pub t_net: MlpSpec,
    pub v_net: MlpSpec,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for HnnConfig {
    fn default() -> Self {
        let net = MlpSpec::uniform(1, 32, 2, 1, Activation::Tanh).expect("valid widths");
        Self { t_net: net.clone(), v_net: net, train: TrainConfig::lbfgs_only(2000), seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct HnnResult {
    pub net: HamiltonianNet,
    pub history: Vec<f64>,
}

pub fn hnn_train(batch: &HnnBatch, mass: f64, cfg: &HnnConfig) -> Result<HnnResult> {
    if batch.is_empty() {
        return Err(Error::EmptySelection("Hamiltonian training needs data".into()));
    }
    let amax = |x: &[f64]| x.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let (qs, ps) = (amax(&batch.q), amax(&batch.p));
    let scale = [amax(&batch.q_dot), amax(&batch.p_dot)];
    // energy scale from the kinetic term at the largest momentum
    let hs = ps * scale[0];
    let mut rng = RngStream::new(cfg.seed).substream("hnn-init");
    let net = HamiltonianNet::new(cfg.t_net.clone(), cfg.v_net.clone(), mass, [qs, ps, hs], &mut rng)?;
    let mut obj = |th: &[f64]| hnn_training_loss(&net, th, batch, scale);
    let out = train(&mut obj, net.params(), &cfg.train)?;
    Ok(HnnResult { net: net.with_params(&out.theta), history: out.history })
}

/// Relative RMSE of the learned field against `truth` on an n×n grid over
/// [−q_max, q_max] × [−p_max, p_max].
pub fn field_error(net: &HamiltonianNet, truth: &impl Separable, q_max: f64, p_max: f64, n: usize) -> f64 {
    let axis = |m: f64| -> Vec<f64> { (0..n).map(|i| -m + 2.0 * m * i as f64 / (n - 1).max(1) as f64).collect() };
    let (qa, pa) = (axis(q_max), axis(p_max));
    let (mut q, mut p) = (Vec::new(), Vec::new());
    for &qi in &qa {
        for &pj in &pa {
            q.push(qi);
            p.push(pj);
        }
    }
    let (fq, fp) = net.vector_field(&q, &p);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..q.len() {
        let (tq, tp) = (truth.dh_dp(p[i]), -truth.dh_dq(q[i]));
        num += (fq[i] - tq).powi(2) + (fp[i] - tp).powi(2);
        den += tq * tq + tp * tp;
    }
    (num / den).sqrt()
}
