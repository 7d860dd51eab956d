//! Learned flows stepped by classical integrators (k+1 predictors), and
//! Hamiltonian networks with symplectic stepping.
//!
//! Training differentiates through the unrolled integrator on the tape
//! (discretize-then-optimize).

pub mod hnn;

use crate::metrics::{rmse, std_dev};
use crate::nn::{mlp_forward, train, Activation, MlpSpec, MlpVars, TrainConfig};
use crate::numkit::{grad, DenseMatrix, RngStream, Tape, Var};
use crate::sim::{ForcingSpec, OscillatorParams, Trajectory};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegratorKind {
    ExplicitEuler,
    Rk4,
    /// Velocity (momentum) first, then displacement from the updated velocity.
    SymplecticEuler,
    Leapfrog,
}

impl IntegratorKind {
    pub fn name(self) -> &'static str {
        match self {
            IntegratorKind::ExplicitEuler => "explicit-euler",
            IntegratorKind::Rk4 => "rk4",
            IntegratorKind::SymplecticEuler => "symplectic-euler",
            IntegratorKind::Leapfrog => "leapfrog",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::ExplicitEuler, Self::Rk4, Self::SymplecticEuler, Self::Leapfrog].into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorSpec {
    pub kind: IntegratorKind,
    pub h: f64,
}

impl IntegratorSpec {
    pub fn new(kind: IntegratorKind, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParam(format!("step must be positive, got {h}")));
        }
        Ok(Self { kind, h })
    }
}

/// Forcing at the start, midpoint and end of a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepForcing {
    pub start: f64,
    pub mid: f64,
    pub end: f64,
}

impl StepForcing {
    /// Zero-order hold.
    pub fn hold(f: f64) -> Self {
        Self { start: f, mid: f, end: f }
    }

    pub fn sample(forcing: &ForcingSpec, t: f64, h: f64) -> Self {
        Self { start: forcing.eval(t), mid: forcing.eval(t + 0.5 * h), end: forcing.eval(t + h) }
    }
}

/// ż = g(z, f).
pub trait VectorField {
    fn eval(&self, z: [f64; 2], f: f64) -> [f64; 2];
}

impl VectorField for OscillatorParams {
    fn eval(&self, z: [f64; 2], f: f64) -> [f64; 2] {
        self.rhs(z, f)
    }
}

/// One integrator step of `field` from `z`.
pub fn node_step(field: &impl VectorField, z: [f64; 2], f: StepForcing, integ: &IntegratorSpec) -> Result<[f64; 2]> {
    let h = integ.h;
    let out = match integ.kind {
        IntegratorKind::ExplicitEuler => {
            let k1 = field.eval(z, f.start);
            [z[0] + h * k1[0], z[1] + h * k1[1]]
        }
        IntegratorKind::Rk4 => {
            let k1 = field.eval(z, f.start);
            let k2 = field.eval([z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]], f.mid);
            let k3 = field.eval([z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]], f.mid);
            let k4 = field.eval([z[0] + h * k3[0], z[1] + h * k3[1]], f.end);
            [
                z[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                z[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ]
        }
        IntegratorKind::SymplecticEuler => {
            let v1 = z[1] + h * field.eval(z, f.start)[1];
            [z[0] + h * field.eval([z[0], v1], f.start)[0], v1]
        }
        IntegratorKind::Leapfrog => {
            let vh = z[1] + 0.5 * h * field.eval(z, f.start)[1];
            let u1 = z[0] + h * field.eval([z[0], vh], f.mid)[0];
            [u1, vh + 0.5 * h * field.eval([u1, vh], f.end)[1]]
        }
    };
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Divergence { step: 0 })
    }
}

/// Free-run from `z0`, one step per forcing entry.
pub fn rollout(field: &impl VectorField, z0: [f64; 2], forcing: &[StepForcing], integ: &IntegratorSpec) -> Result<Vec<[f64; 2]>> {
    let mut out = Vec::with_capacity(forcing.len() + 1);
    out.push(z0);
    let mut z = z0;
    for (k, f) in forcing.iter().enumerate() {
        z = node_step(field, z, *f, integ).map_err(|_| Error::Divergence { step: k + 1 })?;
        out.push(z);
    }
    Ok(out)
}

/// Network flow (u, v, f) → (u̇, v̇) with fixed input and output scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeFunc {
    pub spec: MlpSpec,
    pub theta: Vec<f64>,
    pub in_mean: [f64; 3],
    pub in_sd: [f64; 3],
    pub out_sd: [f64; 2],
}

impl OdeFunc {
    pub fn new(spec: MlpSpec, theta: Vec<f64>, in_mean: [f64; 3], in_sd: [f64; 3], out_sd: [f64; 2]) -> Result<Self> {
        if spec.input_dim() != 3 || spec.output_dim() != 2 {
            return Err(Error::InvalidParam(format!("flow network must map 3 inputs to 2 outputs, got {} -> {}", spec.input_dim(), spec.output_dim())));
        }
        if theta.len() != spec.n_params() {
            return Err(Error::InvalidParam(format!("flow network expects {} parameters, got {}", spec.n_params(), theta.len())));
        }
        Ok(Self { spec, theta, in_mean, in_sd, out_sd })
    }

    fn graph(&self, tape: &mut Tape, vars: &MlpVars, u: Var, v: Var, f: Var) -> (Var, Var) {
        let x = tape.concat_cols(&[u, v, f]);
        let mu = tape.constant(DenseMatrix::from_vec(1, 3, self.in_mean.to_vec()));
        let inv = tape.constant(DenseMatrix::from_vec(1, 3, self.in_sd.iter().map(|s| 1.0 / s).collect()));
        let xc = tape.sub(x, mu);
        let xn = tape.mul(xc, inv);
        let y = mlp_forward(tape, &self.spec, vars, xn);
        let sd = tape.constant(DenseMatrix::from_vec(1, 2, self.out_sd.to_vec()));
        let y = tape.mul(y, sd);
        (tape.column(y, 0), tape.column(y, 1))
    }

    /// Flow at a batch of states.
    pub fn eval_batch(&self, u: &[f64], v: &[f64], f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let vars = MlpVars::constants(&mut tape, &self.spec, &self.theta);
        let (u, v, f) = (tape.constant(DenseMatrix::column(u)), tape.constant(DenseMatrix::column(v)), tape.constant(DenseMatrix::column(f)));
        let (du, dv) = self.graph(&mut tape, &vars, u, v, f);
        (tape.value(du).as_slice().to_vec(), tape.value(dv).as_slice().to_vec())
    }

    /// Central-difference Jacobian ∂ż/∂z at (z, f).
    pub fn jacobian(&self, z: [f64; 2], f: f64) -> [[f64; 2]; 2] {
        let mut j = [[0.0; 2]; 2];
        for c in 0..2 {
            let e = 1e-5 * self.in_sd[c];
            let (mut zp, mut zm) = (z, z);
            zp[c] += e;
            zm[c] -= e;
            let (gp, gm) = (self.eval(zp, f), self.eval(zm, f));
            for r in 0..2 {
                j[r][c] = (gp[r] - gm[r]) / (2.0 * e);
            }
        }
        j
    }
}

impl VectorField for OdeFunc {
    fn eval(&self, z: [f64; 2], f: f64) -> [f64; 2] {
        let (du, dv) = self.eval_batch(&[z[0]], &[z[1]], &[f]);
        [du[0], dv[0]]
    }
}

/// (z_k, forcing over the step, z_{k+1}) triples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepDataset {
    pub z: Vec<[f64; 2]>,
    pub forcing: Vec<StepForcing>,
    pub next: Vec<[f64; 2]>,
}

impl StepDataset {
    /// Consecutive sample pairs of `traj`; the forcing is sampled from its
    /// analytic description at each step's start, midpoint and end.
    pub fn from_trajectory(traj: &Trajectory, forcing: &ForcingSpec) -> Result<Self> {
        if traj.len() < 2 {
            return Err(Error::EmptySelection("need at least two samples to form a step".into()));
        }
        let mut d = Self::default();
        for k in 0..traj.len() - 1 {
            d.z.push(traj.state(k));
            d.forcing.push(StepForcing::sample(forcing, traj.t[k], traj.t[k + 1] - traj.t[k]));
            d.next.push(traj.state(k + 1));
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeConfig {
    pub net: MlpSpec,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self { net: MlpSpec::uniform(3, 32, 2, 2, Activation::Tanh).expect("valid widths"), train: TrainConfig::default(), seed: 0 }
    }
}

/// Mean squared one-step error of a flow network, per component divided by
/// h times the flow's output scale.
pub struct StepLoss<'a> {
    func: OdeFunc,
    data: &'a StepDataset,
    integ: IntegratorSpec,
    /// Residual scale per component: h times the spread of the finite-difference rate.
    res_scale: [f64; 2],
}

fn step_graph(tape: &mut Tape, func: &OdeFunc, vars: &MlpVars, u: Var, v: Var, f: [Var; 3], integ: &IntegratorSpec) -> (Var, Var) {
    let h = integ.h;
    let field = |tape: &mut Tape, u: Var, v: Var, f: Var| func.graph(tape, vars, u, v, f);
    let axpy = |tape: &mut Tape, x: Var, a: f64, y: Var| {
        let s = tape.scale(y, a);
        tape.add(x, s)
    };
    match integ.kind {
        IntegratorKind::ExplicitEuler => {
            let (du, dv) = field(tape, u, v, f[0]);
            (axpy(tape, u, h, du), axpy(tape, v, h, dv))
        }
        IntegratorKind::Rk4 => {
            let (a1, b1) = field(tape, u, v, f[0]);
            let (u2, v2) = (axpy(tape, u, 0.5 * h, a1), axpy(tape, v, 0.5 * h, b1));
            let (a2, b2) = field(tape, u2, v2, f[1]);
            let (u3, v3) = (axpy(tape, u, 0.5 * h, a2), axpy(tape, v, 0.5 * h, b2));
            let (a3, b3) = field(tape, u3, v3, f[1]);
            let (u4, v4) = (axpy(tape, u, h, a3), axpy(tape, v, h, b3));
            let (a4, b4) = field(tape, u4, v4, f[2]);
            let combine = |tape: &mut Tape, x: Var, k: [Var; 4]| {
                let s23 = tape.add(k[1], k[2]);
                let s23 = tape.scale(s23, 2.0);
                let s = tape.add(k[0], s23);
                let s = tape.add(s, k[3]);
                axpy(tape, x, h / 6.0, s)
            };
            (combine(tape, u, [a1, a2, a3, a4]), combine(tape, v, [b1, b2, b3, b4]))
        }
        IntegratorKind::SymplecticEuler => {
            let (_, dv) = field(tape, u, v, f[0]);
            let v1 = axpy(tape, v, h, dv);
            let (du, _) = field(tape, u, v1, f[0]);
            (axpy(tape, u, h, du), v1)
        }
        IntegratorKind::Leapfrog => {
            let (_, dv) = field(tape, u, v, f[0]);
            let vh = axpy(tape, v, 0.5 * h, dv);
            let (du, _) = field(tape, u, vh, f[1]);
            let u1 = axpy(tape, u, h, du);
            let (_, dv1) = field(tape, u1, vh, f[2]);
            (u1, axpy(tape, vh, 0.5 * h, dv1))
        }
    }
}

impl<'a> StepLoss<'a> {
    pub fn new(func: OdeFunc, data: &'a StepDataset, integ: IntegratorSpec) -> Self {
        let res_scale = [integ.h * func.out_sd[0], integ.h * func.out_sd[1]];
        Self { func, data, integ, res_scale }
    }

    pub fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.data;
        let mut tape = Tape::new();
        let vars = MlpVars::leaves(&mut tape, &self.func.spec, theta);
        let col = |tape: &mut Tape, x: Vec<f64>| tape.constant(DenseMatrix::column(&x));
        let u = col(&mut tape, d.z.iter().map(|z| z[0]).collect());
        let v = col(&mut tape, d.z.iter().map(|z| z[1]).collect());
        let f = [
            col(&mut tape, d.forcing.iter().map(|f| f.start).collect()),
            col(&mut tape, d.forcing.iter().map(|f| f.mid).collect()),
            col(&mut tape, d.forcing.iter().map(|f| f.end).collect()),
        ];
        let (u1, v1) = step_graph(&mut tape, &self.func, &vars, u, v, f, &self.integ);
        let tu = col(&mut tape, d.next.iter().map(|z| z[0]).collect());
        let tv = col(&mut tape, d.next.iter().map(|z| z[1]).collect());
        let ru = tape.sub(u1, tu);
        let ru = tape.scale(ru, 1.0 / self.res_scale[0]);
        let rv = tape.sub(v1, tv);
        let rv = tape.scale(rv, 1.0 / self.res_scale[1]);
        let r = tape.concat_cols(&[ru, rv]);
        let loss = tape.mean_sq_norm(r);
        let g = grad(&tape, loss)?;
        Ok((tape.scalar(loss), vars.flat_grad(&g)))
    }
}

#[derive(Clone, Debug)]
pub struct NodeResult {
    pub func: OdeFunc,
    pub history: Vec<f64>,
}

/// Fits a flow so that one `integ` step maps each z_k to z_{k+1}.
pub fn node_train(data: &StepDataset, integ: &IntegratorSpec, cfg: &NodeConfig) -> Result<NodeResult> {
    if data.is_empty() {
        return Err(Error::EmptySelection("step dataset is empty".into()));
    }
    let n = data.len();
    let col = |c: usize| -> Vec<f64> { data.z.iter().map(|z| z[c]).collect() };
    let fs: Vec<f64> = data.forcing.iter().map(|f| f.start).collect();
    let cols = [col(0), col(1), fs];
    let spread = |x: &[f64]| {
        let s = std_dev(x);
        if s > 0.0 && s.is_finite() {
            s
        } else {
            x.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0)
        }
    };
    let in_mean = [0.0; 3];
    let in_sd = [spread(&cols[0]), spread(&cols[1]), spread(&cols[2])];
    let rate = |c: usize| -> Vec<f64> { (0..n).map(|i| (data.next[i][c] - data.z[i][c]) / integ.h).collect() };
    let out_sd = [spread(&rate(0)), spread(&rate(1))];
    let mut rng = RngStream::new(cfg.seed).substream("node-init");
    let func = OdeFunc::new(cfg.net.clone(), cfg.net.init(&mut rng), in_mean, in_sd, out_sd)?;
    let problem = StepLoss::new(func.clone(), data, *integ);
    let mut obj = |th: &[f64]| problem.loss_grad(th);
    let out = train(&mut obj, func.theta.clone(), &cfg.train)?;
    Ok(NodeResult { func: OdeFunc { theta: out.theta, ..func }, history: out.history })
}

/// Mean squared one-step error of `field` over the dataset.
pub fn one_step_mse(field: &impl VectorField, data: &StepDataset, integ: &IntegratorSpec) -> Result<f64> {
    let mut s = 0.0;
    for i in 0..data.len() {
        let z1 = node_step(field, data.z[i], data.forcing[i], integ)?;
        s += (z1[0] - data.next[i][0]).powi(2) + (z1[1] - data.next[i][1]).powi(2);
    }
    Ok(s / data.len().max(1) as f64)
}

#[derive(Clone, Debug)]
pub struct NodeOutcome {
    pub result: NodeResult,
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub rmse_u: f64,
    pub rmse_v: f64,
}

/// Trains on every consecutive pair of `traj` and free-runs the learned flow
/// from the first state over the whole record.
pub fn run_node(traj: &Trajectory, forcing: &ForcingSpec, kind: IntegratorKind, cfg: &NodeConfig) -> Result<NodeOutcome> {
    let data = StepDataset::from_trajectory(traj, forcing)?;
    let integ = IntegratorSpec::new(kind, traj.t[1] - traj.t[0])?;
    let result = node_train(&data, &integ, cfg)?;
    let path = rollout(&result.func, traj.state(0), &data.forcing, &integ)?;
    let u_hat: Vec<f64> = path.iter().map(|z| z[0]).collect();
    let v_hat: Vec<f64> = path.iter().map(|z| z[1]).collect();
    Ok(NodeOutcome { rmse_u: rmse(&u_hat, &traj.u), rmse_v: rmse(&v_hat, &traj.v), result, u_hat, v_hat })
}

/// Rollout CSV; `h_hat` adds the learned-energy column.
pub fn write_rollout_csv<W: std::io::Write>(w: W, traj: &Trajectory, u_hat: &[f64], v_hat: &[f64], h_hat: Option<&[f64]>) -> Result<()> {
    let mut names = vec!["t", "u_true", "u_hat", "v_true", "v_hat"];
    let mut cols: Vec<&[f64]> = vec![&traj.t, &traj.u, u_hat, &traj.v, v_hat];
    if let Some(h) = h_hat {
        names.push("H_hat");
        cols.push(h);
    }
    crate::io::write_columns(w, &names, &cols)
}

fn advance(params: &OscillatorParams, forcing: &ForcingSpec, z0: [f64; 2], dt: f64, n: usize, kind: IntegratorKind) -> Result<[f64; 2]> {
    let integ = IntegratorSpec::new(kind, dt)?;
    let mut z = z0;
    for k in 0..n {
        z = node_step(params, z, StepForcing::sample(forcing, k as f64 * dt, dt), &integ)?;
    }
    Ok(z)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Ratio of one-step errors at `h` and `h/2` on the true flow, each against
/// a fine RK4 reference over its own step. Tends to 2^(p+1) for an
/// order-p method.
pub fn local_error_ratio(params: &OscillatorParams, forcing: &ForcingSpec, z0: [f64; 2], h: f64, kind: IntegratorKind) -> Result<f64> {
    let err = |dt: f64| -> Result<f64> {
        let reference = advance(params, forcing, z0, dt / 1024.0, 1024, IntegratorKind::Rk4)?;
        Ok(distance(advance(params, forcing, z0, dt, 1, kind)?, reference))
    };
    Ok(err(h)? / err(0.5 * h)?)
}

/// Ratio of errors at the end of a fixed horizon `steps·h` when stepping
/// with `h` and with `h/2`. Tends to 2^p for an order-p method.
pub fn global_error_ratio(params: &OscillatorParams, forcing: &ForcingSpec, z0: [f64; 2], h: f64, steps: usize, kind: IntegratorKind) -> Result<f64> {
    let horizon = h * steps as f64;
    let reference = advance(params, forcing, z0, horizon / 4096.0, 4096, IntegratorKind::Rk4)?;
    let e1 = distance(advance(params, forcing, z0, h, steps, kind)?, reference);
    let e2 = distance(advance(params, forcing, z0, 0.5 * h, 2 * steps, kind)?, reference);
    Ok(e1 / e2)
}
