//! Physics-informed networks for the Duffing oscillator.
//!
//! A network maps normalized time to the state z = (u, u̇). The loss is a
//! weighted sum of three terms:
//!
//! * observation: mean squared misfit on Ω_o,
//! * physics: mean squared residual of ż − A·z − A_n·u³ − B·f, with ż taken
//!   from a forward-mode tangent of the network (chain factor of the time
//!   normalization applied),
//! * boundary: squared misfit of z(t₀) against ξ.
//!
//! Residuals are divided by the state scale so all three terms are
//! dimensionless. With all physical parameters known, the time axis may be
//! split into consecutive windows, each with its own network whose initial
//! condition is the previous window's end state (time marching). Windows whose
//! final loss stays above `retry_tol` are retrained from fresh seeds.

use crate::metrics::{percent_error, rmse};
use crate::nn::{mlp_forward, Activation, mlp_forward_tangent, train, InputMap, LbfgsConfig, MlpSpec, MlpVars, OutputScale, TrainConfig};
use crate::numkit::{grad, DenseMatrix, RngStream, Tape, Var};
use crate::sim::{OscillatorParams, Trajectory};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamSpec {
    Known(f64),
    /// Positive via θ = (init/ln 2)·softplus(r), starting from r = 0.
    Trainable { init: f64 },
}

impl ParamSpec {
    pub fn is_trainable(&self) -> bool {
        matches!(self, ParamSpec::Trainable { .. })
    }
}

pub const PARAM_NAMES: [&str; 4] = ["m", "c", "k", "k3"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    pub m: ParamSpec,
    pub c: ParamSpec,
    pub k: ParamSpec,
    pub k3: ParamSpec,
}

impl PhysicalParams {
    pub fn known(p: &OscillatorParams) -> Self {
        Self { m: ParamSpec::Known(p.m), c: ParamSpec::Known(p.c), k: ParamSpec::Known(p.k), k3: ParamSpec::Known(p.k3) }
    }

    pub fn as_array(&self) -> [ParamSpec; 4] {
        [self.m, self.c, self.k, self.k3]
    }

    pub fn n_trainable(&self) -> usize {
        self.as_array().iter().filter(|p| p.is_trainable()).count()
    }

    pub fn all_known(&self) -> bool {
        self.n_trainable() == 0
    }

    /// Values for raw trainable coordinates `raw` (in m, c, k, k3 order).
    pub fn values(&self, raw: &[f64]) -> [f64; 4] {
        let mut it = raw.iter();
        self.as_array().map(|p| match p {
            ParamSpec::Known(v) => v,
            ParamSpec::Trainable { init } => init / std::f64::consts::LN_2 * softplus(*it.next().expect("raw parameter")),
        })
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub obs: f64,
    pub phys: f64,
    pub bc: f64,
}

impl LossWeights {
    pub fn new(obs: f64, phys: f64, bc: f64) -> Result<Self> {
        let w = Self { obs, phys, bc };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.obs, self.phys, self.bc];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Mode(format!("loss weights must be finite and nonnegative: {self:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Mode("all loss weights are zero".into()));
        }
        Ok(())
    }
}

/// Initial state ξ imposed at `time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryCondition {
    pub xi: [f64; 2],
    pub time: f64,
}

impl BoundaryCondition {
    pub fn at_rest() -> Self {
        Self { xi: [0.0, 0.0], time: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PinnMode {
    DataDriven,
    EquationDiscovery,
    PhysicsInformed,
    ForwardModeller,
}

impl PinnMode {
    pub fn name(self) -> &'static str {
        match self {
            PinnMode::DataDriven => "data-driven",
            PinnMode::EquationDiscovery => "equation-discovery",
            PinnMode::PhysicsInformed => "physics-informed",
            PinnMode::ForwardModeller => "forward-modeller",
        }
    }
}

/// Which state components the observations carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observed {
    Displacement,
    FullState,
}

impl Observed {
    pub fn columns(self) -> &'static [usize] {
        match self {
            Observed::Displacement => &[0],
            Observed::FullState => &[0, 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PinnConfig {
    pub mode: PinnMode,
    pub weights: LossWeights,
    pub params: PhysicalParams,
    pub net: MlpSpec,
    pub train: TrainConfig,
    /// L-BFGS iterations fitting the observations alone before the full loss.
    pub warmup_iters: usize,
    /// Times the main schedule is run; each run starts a fresh L-BFGS memory.
    pub restarts: usize,
    pub windows: usize,
    pub retry_tol: f64,
    pub max_retries: usize,
    /// Evaluate the physics residual on Ω_o instead of Ω_c.
    pub physics_on_observations: bool,
    pub observed: Observed,
    pub bc: Option<BoundaryCondition>,
    pub seed: u64,
}

impl PinnConfig {
    /// Defaults for `mode` on the standard Duffing task.
    ///
    /// Global networks (data-driven, discovery) take a sine first layer with
    /// ω0 = 60 over the normalized time axis. Known-parameter modes march in
    /// time with one small network per window.
    pub fn for_mode(mode: PinnMode, truth: &OscillatorParams, seed: u64) -> Self {
        let global = MlpSpec::uniform(1, 32, 3, 2, Activation::Tanh).expect("valid widths").with_sine_first(60.0);
        let local = MlpSpec::uniform(1, 32, 2, 2, Activation::Tanh).expect("valid widths").with_sine_first(10.0);
        let base = Self {
            mode,
            weights: LossWeights { obs: 1.0, phys: 1.0, bc: 1.0 },
            params: PhysicalParams::known(truth),
            net: global,
            train: TrainConfig::default(),
            warmup_iters: 0,
            restarts: 1,
            windows: 1,
            retry_tol: f64::INFINITY,
            max_retries: 0,
            physics_on_observations: false,
            observed: Observed::Displacement,
            bc: Some(BoundaryCondition::at_rest()),
            seed,
        };
        let marching = Self { net: local, train: TrainConfig::lbfgs_only(500), retry_tol: 1e-4, max_retries: 3, ..base.clone() };
        match mode {
            PinnMode::DataDriven => Self { weights: LossWeights { obs: 1.0, phys: 0.0, bc: 0.0 }, bc: None, ..base },
            PinnMode::EquationDiscovery => Self {
                params: PhysicalParams {
                    m: ParamSpec::Known(truth.m),
                    c: ParamSpec::Trainable { init: 0.5 },
                    k: ParamSpec::Trainable { init: 5.0 },
                    k3: ParamSpec::Trainable { init: 30.0 },
                },
                weights: LossWeights { obs: 1.0, phys: 1.0, bc: 0.0 },
                train: TrainConfig::lbfgs_only(500),
                warmup_iters: 1000,
                restarts: 10,
                physics_on_observations: true,
                observed: Observed::FullState,
                bc: None,
                ..base
            },
            PinnMode::PhysicsInformed => Self { windows: 32, ..marching },
            PinnMode::ForwardModeller => Self { weights: LossWeights { obs: 0.0, phys: 1.0, bc: 1.0 }, windows: 16, ..marching },
        }
    }

    /// Mode/weight consistency checks.
    pub fn validate(&self, n_obs: usize) -> Result<()> {
        self.weights.validate()?;
        if self.restarts == 0 {
            return Err(Error::Mode("restarts must be at least 1".into()));
        }
        if self.windows == 0 {
            return Err(Error::Mode("windows must be at least 1".into()));
        }
        if self.windows > 1 && !self.params.all_known() {
            return Err(Error::Mode("time marching needs every physical parameter known".into()));
        }
        if self.weights.bc > 0.0 && self.bc.is_none() {
            return Err(Error::Mode("boundary weight set but no boundary condition given".into()));
        }
        if self.weights.obs > 0.0 && n_obs == 0 {
            return Err(Error::Mode("observation weight set but Ω_o is empty".into()));
        }
        if self.physics_on_observations && n_obs == 0 && self.weights.phys > 0.0 {
            return Err(Error::Mode("physics on Ω_o requested with no observations".into()));
        }
        match self.mode {
            PinnMode::ForwardModeller => {
                if n_obs > 0 || self.weights.obs > 0.0 {
                    return Err(Error::Mode("forward modeller takes no observations".into()));
                }
                if !self.params.all_known() {
                    return Err(Error::Mode("forward modeller needs all physical parameters known".into()));
                }
                if self.bc.is_none() {
                    return Err(Error::Mode("forward modeller is ill-posed without a boundary condition".into()));
                }
            }
            PinnMode::EquationDiscovery => {
                if self.params.n_trainable() == 0 {
                    return Err(Error::Mode("equation discovery needs at least one trainable parameter".into()));
                }
            }
            PinnMode::PhysicsInformed => {
                if !self.params.all_known() {
                    return Err(Error::Mode("physics-informed learner expects known parameters".into()));
                }
            }
            PinnMode::DataDriven => {
                if self.weights.phys > 0.0 || self.weights.bc > 0.0 {
                    return Err(Error::Mode("data-driven mode uses the observation term only".into()));
                }
            }
        }
        Ok(())
    }
}

/// Physical parameters as 1×1 tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct PhysVars {
    pub m: Var,
    pub c: Var,
    pub k: Var,
    pub k3: Var,
}

impl PhysVars {
    pub fn constants(tape: &mut Tape, p: &OscillatorParams) -> Self {
        Self { m: tape.scalar_const(p.m), c: tape.scalar_const(p.c), k: tape.scalar_const(p.k), k3: tape.scalar_const(p.k3) }
    }

    /// Known values as constants, trainable ones as scaled softplus of the
    /// leaves in `raw`; returns the raw leaves in m, c, k, k3 order.
    pub fn from_spec(tape: &mut Tape, spec: &PhysicalParams, raw: &[f64]) -> (Self, Vec<Var>) {
        let mut leaves = Vec::new();
        let mut it = raw.iter();
        let mut make = |tape: &mut Tape, p: ParamSpec| match p {
            ParamSpec::Known(v) => tape.scalar_const(v),
            ParamSpec::Trainable { init } => {
                let r = tape.scalar_leaf(*it.next().expect("raw parameter"));
                leaves.push(r);
                let s = tape.softplus(r);
                tape.scale(s, init / std::f64::consts::LN_2)
            }
        };
        let m = make(tape, spec.m);
        let c = make(tape, spec.c);
        let k = make(tape, spec.k);
        let k3 = make(tape, spec.k3);
        (Self { m, c, k, k3 }, leaves)
    }
}

/// Residual ż − A·z − A_n·u³ − B·f per row (n×2).
pub fn physics_residual(tape: &mut Tape, z: Var, dz: Var, f: Var, p: &PhysVars) -> Var {
    let u = tape.column(z, 0);
    let v = tape.column(z, 1);
    let du = tape.column(dz, 0);
    let dv = tape.column(dz, 1);
    let r_u = tape.sub(du, v);
    let cv = tape.mul(p.c, v);
    let ku = tape.mul(p.k, u);
    let u3 = tape.powi(u, 3);
    let k3u3 = tape.mul(p.k3, u3);
    let s1 = tape.sub(f, cv);
    let s2 = tape.sub(s1, ku);
    let s3 = tape.sub(s2, k3u3);
    let acc = tape.div(s3, p.m);
    let r_v = tape.sub(dv, acc);
    tape.concat_cols(&[r_u, r_v])
}

fn inv_scale_row(tape: &mut Tape, scale: [f64; 2]) -> Var {
    tape.constant(DenseMatrix::from_rows(&[vec![1.0 / scale[0], 1.0 / scale[1]]]))
}

/// ⟨‖r/s‖²⟩ over rows, where r is the physics residual and s the state scale.
pub fn physics_loss(tape: &mut Tape, z: Var, dz: Var, f: Var, p: &PhysVars, scale: [f64; 2]) -> Var {
    let r = physics_residual(tape, z, dz, f, p);
    let inv = inv_scale_row(tape, scale);
    let rs = tape.mul(r, inv);
    tape.mean_sq_norm(rs)
}

/// ‖(ξ − z₀)/s‖² for a 1×2 boundary prediction `z0`.
pub fn bc_loss(tape: &mut Tape, z0: Var, bc: &BoundaryCondition, scale: [f64; 2]) -> Var {
    let xi = tape.constant(DenseMatrix::from_rows(&[bc.xi.to_vec()]));
    let d = tape.sub(xi, z0);
    let inv = inv_scale_row(tape, scale);
    let ds = tape.mul(d, inv);
    tape.mean_sq_norm(ds)
}

/// λ_o·L_o + λ_p·L_p + λ_bc·L_bc; terms with zero weight must be `None`
/// and are never formed.
pub fn total_loss(tape: &mut Tape, w: &LossWeights, lo: Option<Var>, lp: Option<Var>, lbc: Option<Var>) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (weight, term, name) in [(w.obs, lo, "observation"), (w.phys, lp, "physics"), (w.bc, lbc, "boundary")] {
        match (weight > 0.0, term) {
            (true, Some(t)) => {
                let scaled = if weight == 1.0 { t } else { tape.scale(t, weight) };
                acc = Some(match acc {
                    Some(a) => tape.add(a, scaled),
                    None => scaled,
                });
            }
            (true, None) => return Err(Error::Mode(format!("{name} weight is {weight} but the term is missing"))),
            (false, Some(_)) => return Err(Error::Mode(format!("{name} term supplied with zero weight"))),
            (false, None) => {}
        }
    }
    acc.ok_or_else(|| Error::Mode("all loss weights are zero".into()))
}

/// Everything one network needs to evaluate its loss.
#[derive(Clone, Debug)]
pub struct WindowProblem {
    pub spec: MlpSpec,
    pub map: InputMap,
    pub scale: OutputScale,
    pub params: PhysicalParams,
    pub weights: LossWeights,
    /// Normalized input times (n×1) and forcing (n×1) at evaluation rows.
    pub x: DenseMatrix,
    pub f: DenseMatrix,
    pub phys_rows: Option<Vec<usize>>,
    pub obs_rows: Vec<usize>,
    pub obs: DenseMatrix,
    pub obs_cols: Vec<usize>,
    pub bc_row: Option<usize>,
    pub bc: Option<BoundaryCondition>,
}

/// Loss components at a parameter vector.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub obs: f64,
    pub phys: f64,
    pub bc: f64,
    pub total: f64,
}

impl WindowProblem {
    /// One network's loss over grid rows `start..=end`, scaled as in a full run.
    pub fn over(cfg: &PinnConfig, data: &PinnData, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= data.times.len() {
            return Err(Error::InvalidParam(format!("window {start}..={end} outside a grid of {}", data.times.len())));
        }
        let scale = output_scale(data, cfg.observed, &cfg.params);
        build_window(cfg, data, &scale, start, end, cfg.bc)
    }

    pub fn n_net(&self) -> usize {
        self.spec.n_params()
    }

    pub fn n_params(&self) -> usize {
        self.n_net() + self.params.n_trainable()
    }

    fn state_scale(&self) -> [f64; 2] {
        [self.scale.sd[0], self.scale.sd[1]]
    }

    /// Builds the loss; returns tape, output node, net vars, raw leaves, parts.
    fn build(&self, theta: &[f64], weights: &LossWeights) -> Result<(Tape, Var, MlpVars, Vec<Var>, LossParts)> {
        let n_net = self.n_net();
        let mut tape = Tape::new();
        let vars = MlpVars::leaves(&mut tape, &self.spec, &theta[..n_net]);
        let (pv, raw) = PhysVars::from_spec(&mut tape, &self.params, &theta[n_net..]);
        let x = tape.constant(self.x.clone());
        let (z, dz) = if weights.phys > 0.0 {
            let dx = tape.constant(DenseMatrix::filled(self.x.rows(), 1, self.map.slope()));
            let (y, dy) = mlp_forward_tangent(&mut tape, &self.spec, &vars, x, dx);
            (self.scale.denormalize(&mut tape, y), Some(self.scale.denormalize_tangent(&mut tape, dy)))
        } else {
            let y = mlp_forward(&mut tape, &self.spec, &vars, x);
            (self.scale.denormalize(&mut tape, y), None)
        };
        let scale = self.state_scale();
        let mut parts = LossParts::default();
        let lo = if weights.obs > 0.0 {
            let rows = tape.rows(z, &self.obs_rows);
            let cols: Vec<Var> = self.obs_cols.iter().map(|&c| tape.column(rows, c)).collect();
            let pred = if cols.len() == 1 { cols[0] } else { tape.concat_cols(&cols) };
            let inv = tape.constant(DenseMatrix::from_vec(1, self.obs_cols.len(), self.obs_cols.iter().map(|&c| 1.0 / scale[c]).collect()));
            let o = tape.constant(self.obs.clone());
            let d = tape.sub(pred, o);
            let ds = tape.mul(d, inv);
            let l = tape.mean_sq_norm(ds);
            parts.obs = tape.scalar(l);
            Some(l)
        } else {
            None
        };
        let lp = match dz {
            Some(dz) if weights.phys > 0.0 => {
                let f = tape.constant(self.f.clone());
                let (zp, dzp, fp) = match &self.phys_rows {
                    Some(rows) => (tape.rows(z, rows), tape.rows(dz, rows), tape.rows(f, rows)),
                    None => (z, dz, f),
                };
                let l = physics_loss(&mut tape, zp, dzp, fp, &pv, scale);
                parts.phys = tape.scalar(l);
                Some(l)
            }
            _ => None,
        };
        let lbc = match (weights.bc > 0.0, self.bc_row, &self.bc) {
            (true, Some(row), Some(bc)) => {
                let z0 = tape.rows(z, &[row]);
                let l = bc_loss(&mut tape, z0, bc, scale);
                parts.bc = tape.scalar(l);
                Some(l)
            }
            (true, _, _) => return Err(Error::Mode("boundary term requested without a boundary row".into())),
            _ => None,
        };
        let total = total_loss(&mut tape, weights, lo, lp, lbc)?;
        parts.total = tape.scalar(total);
        Ok((tape, total, vars, raw, parts))
    }

    pub fn loss_parts(&self, theta: &[f64]) -> Result<LossParts> {
        Ok(self.build(theta, &self.weights)?.4)
    }

    /// Loss and gradient under `weights` (which may switch terms off).
    pub fn loss_grad_with(&self, theta: &[f64], weights: &LossWeights) -> Result<(f64, Vec<f64>)> {
        let (tape, out, vars, raw, parts) = self.build(theta, weights)?;
        let g = grad(&tape, out)?;
        let mut flat = vars.flat_grad(&g);
        for r in raw {
            flat.push(g.scalar(r));
        }
        Ok((parts.total, flat))
    }

    pub fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.loss_grad_with(theta, &self.weights)
    }

    /// Physical-unit state and its time derivative at normalized inputs `x`.
    pub fn predict(&self, theta: &[f64], x: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        let mut tape = Tape::new();
        let vars = MlpVars::constants(&mut tape, &self.spec, &theta[..self.n_net()]);
        let xv = tape.constant(x.clone());
        let dx = tape.constant(DenseMatrix::filled(x.rows(), 1, self.map.slope()));
        let (y, dy) = mlp_forward_tangent(&mut tape, &self.spec, &vars, xv, dx);
        let z = self.scale.denormalize(&mut tape, y);
        let dz = self.scale.denormalize_tangent(&mut tape, dy);
        (tape.value(z).clone(), tape.value(dz).clone())
    }
}

/// The inputs shared by all PINN runs: a time grid with forcing samples and
/// optional observations at a subset of grid indices.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnData {
    pub times: Vec<f64>,
    pub force: Vec<f64>,
    pub obs_idx: Vec<usize>,
    /// One row per observation index, one column per observed component.
    pub obs: Vec<Vec<f64>>,
}

impl PinnData {
    pub fn from_trajectory(traj: &Trajectory, obs_idx: &[usize], observed: Observed) -> Self {
        let obs = obs_idx
            .iter()
            .map(|&i| observed.columns().iter().map(|&c| if c == 0 { traj.u[i] } else { traj.v[i] }).collect())
            .collect();
        Self { times: traj.t.clone(), force: traj.f.clone(), obs_idx: obs_idx.to_vec(), obs }
    }

    pub fn forward_only(traj: &Trajectory) -> Self {
        Self { times: traj.t.clone(), force: traj.f.clone(), obs_idx: Vec::new(), obs: Vec::new() }
    }
}

#[derive(Clone, Debug)]
pub struct WindowFit {
    pub start: usize,
    pub end: usize,
    pub theta: Vec<f64>,
    pub problem: WindowProblem,
    pub parts: LossParts,
    pub attempts: usize,
}

#[derive(Clone, Debug)]
pub struct PinnResult {
    pub times: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    /// Estimated (or known) m, c, k, k3.
    pub params: [f64; 4],
    pub history: Vec<f64>,
    pub windows: Vec<WindowFit>,
}

/// State scale used to normalize outputs and residuals: observed spread when
/// available, otherwise the static deflection max|f|/k and ω_n times it.
fn output_scale(data: &PinnData, observed: Observed, params: &PhysicalParams) -> OutputScale {
    let vals = params.values(&vec![0.0; params.n_trainable()]);
    let (k, m) = (vals[2].max(f64::MIN_POSITIVE), vals[0]);
    let wn = (k / m).sqrt();
    let fmax = data.force.iter().fold(0.0f64, |a, f| a.max(f.abs()));
    let static_u = if fmax > 0.0 { fmax / k } else { 1.0 };
    let cols = observed.columns();
    if data.obs.is_empty() {
        return OutputScale { mean: vec![0.0, 0.0], sd: vec![static_u, static_u * wn] };
    }
    let col = |j: usize| data.obs.iter().map(|r| r[j]).collect::<Vec<_>>();
    let u = col(0);
    let su = OutputScale::from_columns(&[&u]);
    if cols.len() == 2 {
        let v = col(1);
        OutputScale::from_columns(&[&u, &v])
    } else {
        OutputScale { mean: vec![su.mean[0], 0.0], sd: vec![su.sd[0], su.sd[0] * wn] }
    }
}

fn window_bounds(n: usize, windows: usize) -> Vec<usize> {
    (0..=windows).map(|j| ((j * (n - 1)) as f64 / windows as f64).round() as usize).collect()
}

fn build_window(cfg: &PinnConfig, data: &PinnData, scale: &OutputScale, start: usize, end: usize, bc: Option<BoundaryCondition>) -> Result<WindowProblem> {
    let obs_in: Vec<(usize, usize)> =
        data.obs_idx.iter().enumerate().filter(|(_, &g)| g >= start && g <= end).map(|(k, &g)| (k, g)).collect();
    let mut rows: Vec<usize> = if cfg.weights.phys > 0.0 && !cfg.physics_on_observations {
        (start..=end).collect()
    } else {
        obs_in.iter().map(|(_, g)| *g).collect()
    };
    if cfg.weights.phys > 0.0 && cfg.physics_on_observations {
        // physics on Ω_o: rows already hold the observation indices
    }
    let needs_bc = cfg.weights.bc > 0.0;
    if needs_bc && !rows.contains(&start) {
        rows.push(start);
    }
    rows.sort_unstable();
    rows.dedup();
    if rows.is_empty() {
        return Err(Error::EmptySelection(format!("window [{start}, {end}] has no evaluation points")));
    }
    let pos = |g: usize| rows.binary_search(&g).expect("row present");
    let obs_rows: Vec<usize> = obs_in.iter().map(|(_, g)| pos(*g)).collect();
    let cols = cfg.observed.columns();
    let obs = DenseMatrix::from_vec(obs_in.len(), cols.len(), obs_in.iter().flat_map(|(k, _)| data.obs[*k].clone()).collect());
    let phys_rows = if cfg.weights.phys > 0.0 && cfg.physics_on_observations && needs_bc && !data.obs_idx.contains(&start) {
        Some(obs_rows.clone())
    } else {
        None
    };
    let map = InputMap::new(data.times[start], data.times[end])?;
    let x = DenseMatrix::column(&rows.iter().map(|&g| map.apply(data.times[g])).collect::<Vec<_>>());
    let f = DenseMatrix::column(&rows.iter().map(|&g| data.force[g]).collect::<Vec<_>>());
    Ok(WindowProblem {
        spec: cfg.net.clone(),
        map,
        scale: scale.clone(),
        params: cfg.params,
        weights: cfg.weights,
        x,
        f,
        phys_rows,
        obs_rows,
        obs,
        obs_cols: cols.to_vec(),
        bc_row: if needs_bc { Some(pos(start)) } else { None },
        bc,
    })
}

fn fit_window(cfg: &PinnConfig, problem: &WindowProblem, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>, LossParts)> {
    let mut theta = cfg.net.init(rng);
    theta.extend(std::iter::repeat_n(0.0, cfg.params.n_trainable()));
    let mut history = Vec::new();
    if cfg.warmup_iters > 0 && cfg.weights.obs > 0.0 && cfg.weights.phys > 0.0 {
        // Fit the observations first; physical parameters do not enter this
        // loss, so their raw values stay at zero.
        let data_only = LossWeights { obs: cfg.weights.obs, phys: 0.0, bc: 0.0 };
        let mut obj = |th: &[f64]| problem.loss_grad_with(th, &data_only);
        let warm = train(&mut obj, theta, &TrainConfig { adam_iters: 0, lbfgs: LbfgsConfig { max_iter: cfg.warmup_iters, ..cfg.train.lbfgs.clone() }, ..cfg.train.clone() })?;
        theta = warm.theta;
        history.extend(warm.history);
    }
    for _ in 0..cfg.restarts {
        let mut obj = |th: &[f64]| problem.loss_grad(th);
        let out = train(&mut obj, theta, &cfg.train)?;
        theta = out.theta;
        history.extend(out.history);
    }
    let parts = problem.loss_parts(&theta)?;
    Ok((theta, history, parts))
}

/// Trains per `cfg` on `data` and predicts the state on the whole grid.
pub fn run_pinn(cfg: &PinnConfig, data: &PinnData) -> Result<PinnResult> {
    cfg.validate(data.obs_idx.len())?;
    let n = data.times.len();
    if n < 2 || data.force.len() != n {
        return Err(Error::InvalidParam(format!("need at least two grid points with forcing, got {n} times and {} forces", data.force.len())));
    }
    if cfg.windows >= n {
        return Err(Error::Mode(format!("{} windows on a grid of {n} points", cfg.windows)));
    }
    let scale = output_scale(data, cfg.observed, &cfg.params);
    let bounds = window_bounds(n, cfg.windows);
    let root = RngStream::new(cfg.seed).substream("init");
    let mut bc = cfg.bc;
    let mut fits: Vec<WindowFit> = Vec::with_capacity(cfg.windows);
    let mut history = Vec::new();
    for w in 0..cfg.windows {
        let (start, end) = (bounds[w], bounds[w + 1]);
        let problem = build_window(cfg, data, &scale, start, end, bc)?;
        let mut best: Option<(Vec<f64>, Vec<f64>, LossParts)> = None;
        let mut attempts = 0;
        for attempt in 0..=cfg.max_retries {
            attempts = attempt + 1;
            let mut rng = root.substream(&format!("window-{w}-attempt-{attempt}"));
            let fit = fit_window(cfg, &problem, &mut rng)?;
            let better = best.as_ref().map(|b| fit.2.total < b.2.total).unwrap_or(true);
            if better {
                best = Some(fit);
            }
            if best.as_ref().unwrap().2.total <= cfg.retry_tol {
                break;
            }
        }
        let (theta, hist, parts) = best.expect("at least one attempt");
        history.extend(hist);
        if w + 1 < cfg.windows {
            let map = problem.map;
            let (z, _) = problem.predict(&theta, &DenseMatrix::column(&[map.apply(data.times[end])]));
            bc = Some(BoundaryCondition { xi: [z.get(0, 0), z.get(0, 1)], time: data.times[end] });
        }
        fits.push(WindowFit { start, end, theta, problem, parts, attempts });
    }
    let (u_hat, v_hat) = predict_grid(&fits, &data.times);
    let last = fits.last().expect("at least one window");
    let params = cfg.params.values(&last.theta[last.problem.n_net()..]);
    Ok(PinnResult { times: data.times.clone(), u_hat, v_hat, params, history, windows: fits })
}

/// Stitches window predictions; a shared boundary point belongs to the
/// later window.
pub fn predict_grid(fits: &[WindowFit], times: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![0.0; times.len()];
    let mut v = vec![0.0; times.len()];
    for (w, fit) in fits.iter().enumerate() {
        let stop = if w + 1 == fits.len() { fit.end + 1 } else { fit.end };
        let idx: Vec<usize> = (fit.start..stop).collect();
        let x = DenseMatrix::column(&idx.iter().map(|&i| fit.problem.map.apply(times[i])).collect::<Vec<_>>());
        let (z, _) = fit.problem.predict(&fit.theta, &x);
        for (r, &i) in idx.iter().enumerate() {
            u[i] = z.get(r, 0);
            v[i] = z.get(r, 1);
        }
    }
    (u, v)
}

/// One row of a parameter-estimate table.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEstimate {
    pub name: &'static str,
    pub truth: f64,
    pub estimate: f64,
    pub percent_error: f64,
}

/// Rows for every trainable parameter.
pub fn param_table(cfg: &PinnConfig, result: &PinnResult, truth: &OscillatorParams) -> Vec<ParamEstimate> {
    let truths = [truth.m, truth.c, truth.k, truth.k3];
    cfg.params
        .as_array()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_trainable())
        .map(|(i, _)| ParamEstimate {
            name: PARAM_NAMES[i],
            truth: truths[i],
            estimate: result.params[i],
            percent_error: percent_error(result.params[i], truths[i]),
        })
        .collect()
}

pub fn write_state_csv<W: std::io::Write>(w: W, truth: &Trajectory, result: &PinnResult) -> Result<()> {
    crate::io::write_columns(w, &["t", "u_true", "u_hat", "v_true", "v_hat"], &[&truth.t, &truth.u, &result.u_hat, &truth.v, &result.v_hat])
}

pub fn write_param_csv<W: std::io::Write>(w: W, rows: &[ParamEstimate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["param", "true", "estimate", "percent_error"])?;
    for r in rows {
        out.write_record([r.name.to_string(), crate::io::fmt_real(r.truth), crate::io::fmt_real(r.estimate), crate::io::fmt_real(r.percent_error)])?;
    }
    out.flush()?;
    Ok(())
}

/// Sobol-256 observations of the full state, physics on Ω_o, trainable
/// (c, k, k3) or (c, k) with k3 frozen at zero for the linear case.
pub fn discovery_config(truth: &OscillatorParams, nonlinear: bool, seed: u64) -> PinnConfig {
    let mut cfg = PinnConfig::for_mode(PinnMode::EquationDiscovery, truth, seed);
    if !nonlinear {
        cfg.params.k3 = ParamSpec::Known(0.0);
    }
    cfg
}

pub fn run_equation_discovery(traj: &Trajectory, cfg: &PinnConfig, n_obs: usize, truth: &OscillatorParams) -> Result<(PinnResult, Vec<ParamEstimate>)> {
    let (domain, _) = crate::sim::subsample(traj, crate::sim::Selection::Sobol(n_obs))?;
    let data = PinnData::from_trajectory(traj, &domain.observation, cfg.observed);
    let res = run_pinn(cfg, &data)?;
    let table = param_table(cfg, &res, truth);
    Ok((res, table))
}

#[derive(Clone, Debug)]
pub struct EnhancedOutcome {
    pub informed: PinnResult,
    pub baseline: PinnResult,
    pub rmse_u_informed: f64,
    pub rmse_u_baseline: f64,
    pub rmse_v_informed: f64,
    pub rmse_v_baseline: f64,
}

/// Physics-informed vs data-only learners on the same stride subsample.
pub fn run_enhanced_learning(traj: &Trajectory, stride: usize, informed: &PinnConfig, baseline: &PinnConfig) -> Result<EnhancedOutcome> {
    let (domain, _) = crate::sim::subsample(traj, crate::sim::Selection::Stride(stride))?;
    let data_i = PinnData::from_trajectory(traj, &domain.observation, informed.observed);
    let data_b = PinnData::from_trajectory(traj, &domain.observation, baseline.observed);
    let inf = run_pinn(informed, &data_i)?;
    let base = run_pinn(baseline, &data_b)?;
    Ok(EnhancedOutcome {
        rmse_u_informed: rmse(&inf.u_hat, &traj.u),
        rmse_u_baseline: rmse(&base.u_hat, &traj.u),
        rmse_v_informed: rmse(&inf.v_hat, &traj.v),
        rmse_v_baseline: rmse(&base.v_hat, &traj.v),
        informed: inf,
        baseline: base,
    })
}

/// Forward modelling: no observations, all parameters known, ξ imposed.
pub fn run_forward_model(traj: &Trajectory, cfg: &PinnConfig) -> Result<(PinnResult, f64)> {
    let res = run_pinn(cfg, &PinnData::forward_only(traj))?;
    let e = rmse(&res.u_hat, &traj.u);
    Ok((res, e))
}
