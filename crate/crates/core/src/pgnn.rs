//! Physics-guided residual learning: a linear prior (k3 = 0) simulated under
//! the true forcing, plus a network t → Δz trained on displacement alone.
//!
//! Loss on normalized residuals:
//!
//! ⟨(u* − u_prior − Δu)²⟩_Ω_o + ρ·⟨‖Δz‖²⟩_Ω_c + κ·⟨(dΔu/dt − Δv)²⟩_Ω_c
//!
//! The last term keeps the unobserved velocity correction consistent with
//! the displacement correction; without it Δv only feels the amplitude
//! penalty and stays at zero.

use crate::metrics::rmse;
use crate::nn::{mlp_forward_tangent, train, Activation, InputMap, MlpSpec, MlpVars, OutputScale, TrainConfig};
use crate::numkit::{grad, DenseMatrix, RngStream, Tape};
use crate::sim::{simulate_with, ForcingSpec, OscillatorParams, SimConfig, Trajectory};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorModel {
    params: OscillatorParams,
}

impl PriorModel {
    /// Copies the known physics with the cubic term removed.
    pub fn from_known(known: &OscillatorParams) -> Self {
        Self { params: known.linear() }
    }

    pub fn params(&self) -> &OscillatorParams {
        &self.params
    }

    pub fn predict(&self, forcing: &ForcingSpec, grid: &SimConfig) -> Result<Trajectory> {
        simulate_with(&self.params, forcing, grid)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgnnConfig {
    pub net: MlpSpec,
    pub train: TrainConfig,
    pub restarts: usize,
    pub residual_penalty: f64,
    pub kinematic_weight: f64,
    pub seed: u64,
}

impl Default for PgnnConfig {
    fn default() -> Self {
        Self {
            net: MlpSpec::uniform(1, 32, 3, 2, Activation::Tanh).expect("valid widths").with_sine_first(60.0),
            train: TrainConfig::lbfgs_only(500),
            restarts: 4,
            residual_penalty: 1e-4,
            kinematic_weight: 1.0,
            seed: 0,
        }
    }
}

/// The trained correction network.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualNet {
    pub spec: MlpSpec,
    pub theta: Vec<f64>,
    pub map: InputMap,
    pub scale: OutputScale,
}

impl ResidualNet {
    /// Δu, Δv at `times`.
    pub fn predict(&self, times: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let vars = MlpVars::constants(&mut tape, &self.spec, &self.theta);
        let x = tape.constant(self.map.column(times));
        let dx = tape.constant(DenseMatrix::filled(times.len(), 1, self.map.slope()));
        let (y, _) = mlp_forward_tangent(&mut tape, &self.spec, &vars, x, dx);
        let z = self.scale.denormalize(&mut tape, y);
        let z = tape.value(z);
        ((0..times.len()).map(|i| z.get(i, 0)).collect(), (0..times.len()).map(|i| z.get(i, 1)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct PgnnResult {
    pub net: ResidualNet,
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub history: Vec<f64>,
}

/// The guided-training objective over the network parameters.
pub struct GuidedLoss<'a> {
    spec: &'a MlpSpec,
    map: InputMap,
    scale: OutputScale,
    x: DenseMatrix,
    obs_idx: &'a [usize],
    target: DenseMatrix,
    cfg: &'a PgnnConfig,
}

impl<'a> GuidedLoss<'a> {
    /// Residual targets u_obs − u_prior at `obs_idx`, normalized by their spread.
    pub fn new(prior: &Trajectory, obs_idx: &'a [usize], u_obs: &[f64], cfg: &'a PgnnConfig) -> Result<Self> {
        if obs_idx.is_empty() {
            return Err(Error::EmptySelection("guided training needs observations".into()));
        }
        if obs_idx.len() != u_obs.len() || obs_idx.iter().any(|&i| i >= prior.len()) {
            return Err(Error::InvalidParam("observation indices and values disagree with the prior grid".into()));
        }
        let resid: Vec<f64> = obs_idx.iter().zip(u_obs).map(|(&i, u)| u - prior.u[i]).collect();
        let su = crate::metrics::std_dev(&resid).max(1e-12 * crate::sim::rms(u_obs).max(1e-300));
        let wn = (prior.v.iter().map(|v| v * v).sum::<f64>() / prior.u.iter().map(|u| u * u).sum::<f64>().max(1e-300)).sqrt();
        let wn = if wn.is_finite() && wn > 0.0 { wn } else { 1.0 };
        let map = InputMap::new(prior.t[0], *prior.t.last().expect("nonempty prior"))?;
        Ok(Self {
            spec: &cfg.net,
            map,
            scale: OutputScale { mean: vec![0.0, 0.0], sd: vec![su, su * wn] },
            x: map.column(&prior.t),
            obs_idx,
            target: DenseMatrix::column(&resid.iter().map(|r| r / su).collect::<Vec<_>>()),
            cfg,
        })
    }

    pub fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let vars = MlpVars::leaves(&mut tape, self.spec, theta);
        let x = tape.constant(self.x.clone());
        let dx = tape.constant(DenseMatrix::filled(self.x.rows(), 1, self.map.slope()));
        let (y, dy) = mlp_forward_tangent(&mut tape, self.spec, &vars, x, dx);
        let sd = &self.scale.sd;
        // observation misfit on normalized displacement residuals
        let yu = tape.column(y, 0);
        let at_obs = tape.rows(yu, self.obs_idx);
        let t = tape.constant(self.target.clone());
        let d = tape.sub(at_obs, t);
        let lo = tape.mean_sq_norm(d);
        let mut total = lo;
        if self.cfg.residual_penalty > 0.0 {
            let amp = tape.mean_sq_norm(y);
            let amp = tape.scale(amp, self.cfg.residual_penalty);
            total = tape.add(total, amp);
        }
        if self.cfg.kinematic_weight > 0.0 {
            // dΔu/dt − Δv in units of the velocity scale
            let du = tape.column(dy, 0);
            let du = tape.scale(du, sd[0] / sd[1]);
            let dv = tape.column(y, 1);
            let r = tape.sub(du, dv);
            let lk = tape.mean_sq_norm(r);
            let lk = tape.scale(lk, self.cfg.kinematic_weight);
            total = tape.add(total, lk);
        }
        let g = grad(&tape, total)?;
        Ok((tape.scalar(total), vars.flat_grad(&g)))
    }
}

/// Fits Δz to displacement observations `u_obs` at grid indices `obs_idx`
/// of the prior trajectory.
pub fn guided_train(prior: &Trajectory, obs_idx: &[usize], u_obs: &[f64], cfg: &PgnnConfig) -> Result<PgnnResult> {
    if cfg.restarts == 0 {
        return Err(Error::InvalidParam("restarts must be at least 1".into()));
    }
    let problem = GuidedLoss::new(prior, obs_idx, u_obs, cfg)?;
    let mut theta = cfg.net.init(&mut RngStream::new(cfg.seed).substream("pgnn-init"));
    let mut history = Vec::new();
    for _ in 0..cfg.restarts {
        let mut obj = |th: &[f64]| problem.loss_grad(th);
        let out = train(&mut obj, theta, &cfg.train)?;
        theta = out.theta;
        history.extend(out.history);
    }
    let net = ResidualNet { spec: cfg.net.clone(), theta, map: problem.map, scale: problem.scale.clone() };
    let (du, dv) = net.predict(&prior.t);
    let u_hat = prior.u.iter().zip(&du).map(|(a, b)| a + b).collect();
    let v_hat = prior.v.iter().zip(&dv).map(|(a, b)| a + b).collect();
    Ok(PgnnResult { net, u_hat, v_hat, history })
}

#[derive(Clone, Debug)]
pub struct PgnnOutcome {
    pub prior: Trajectory,
    pub result: PgnnResult,
    pub rmse_u_prior: f64,
    pub rmse_v_prior: f64,
    pub rmse_u: f64,
    pub rmse_v: f64,
}

/// Simulates the prior on the truth's grid, trains on every `stride`-th
/// displacement sample and scores both predictors on the dense grid.
pub fn run_pgnn(truth: &Trajectory, known: &OscillatorParams, forcing: &ForcingSpec, grid: &SimConfig, stride: usize, cfg: &PgnnConfig) -> Result<PgnnOutcome> {
    let prior = PriorModel::from_known(known).predict(forcing, grid)?;
    if prior.len() != truth.len() {
        return Err(Error::InvalidParam(format!("prior grid {} vs truth {}", prior.len(), truth.len())));
    }
    let (domain, _) = crate::sim::subsample(truth, crate::sim::Selection::Stride(stride))?;
    let u_obs: Vec<f64> = domain.observation.iter().map(|&i| truth.u[i]).collect();
    let result = guided_train(&prior, &domain.observation, &u_obs, cfg)?;
    Ok(PgnnOutcome {
        rmse_u_prior: rmse(&prior.u, &truth.u),
        rmse_v_prior: rmse(&prior.v, &truth.v),
        rmse_u: rmse(&result.u_hat, &truth.u),
        rmse_v: rmse(&result.v_hat, &truth.v),
        prior,
        result,
    })
}

pub fn write_csv<W: std::io::Write>(w: W, truth: &Trajectory, o: &PgnnOutcome) -> Result<()> {
    crate::io::write_columns(
        w,
        &["t", "u_true", "u_prior", "u_hat", "v_true", "v_prior", "v_hat"],
        &[&truth.t, &truth.u, &o.prior.u, &o.result.u_hat, &truth.v, &o.prior.v, &o.result.v_hat],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_drops_cubic_term_only() {
        let p = OscillatorParams::default();
        let prior = PriorModel::from_known(&p);
        assert_eq!(prior.params().k3, 0.0);
        assert_eq!((prior.params().m, prior.params().c, prior.params().k), (p.m, p.c, p.k));
    }

    #[test]
    fn zero_forcing_prior_is_zero() {
        let prior = PriorModel::from_known(&OscillatorParams::default());
        let tr = prior.predict(&ForcingSpec::zero(), &SimConfig { n: 50, ..SimConfig::default() }).unwrap();
        assert!(tr.u.iter().chain(&tr.v).all(|x| *x == 0.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let n = 20;
        let mut prior = Trajectory::with_capacity(n);
        for i in 0..n {
            let t = i as f64 * 0.3;
            prior.push(t, (0.7 * t).sin() * 0.1, 0.07 * (0.7 * t).cos(), 0.0, 0.0);
        }
        let cfg = PgnnConfig { net: MlpSpec::uniform(1, 4, 2, 2, Activation::Tanh).unwrap().with_sine_first(3.0), ..PgnnConfig::default() };
        let idx: Vec<usize> = (0..n).step_by(3).collect();
        let resid: Vec<f64> = idx.iter().map(|&i| 0.01 * (i as f64).cos()).collect();
        let map = InputMap::new(0.0, prior.t[n - 1]).unwrap();
        let p = GuidedLoss {
            spec: &cfg.net,
            map,
            scale: OutputScale { mean: vec![0.0, 0.0], sd: vec![0.01, 0.007] },
            x: map.column(&prior.t),
            obs_idx: &idx,
            target: DenseMatrix::column(&resid),
            cfg: &cfg,
        };
        let theta = cfg.net.init(&mut RngStream::new(2));
        let (_, g) = p.loss_grad(&theta).unwrap();
        for i in 0..theta.len() {
            let h = 1e-6;
            let mut tp = theta.clone();
            tp[i] += h;
            let fp = p.loss_grad(&tp).unwrap().0;
            tp[i] -= 2.0 * h;
            let fm = p.loss_grad(&tp).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(g[i].abs()).max(1e-8), "{i}: {fd} vs {}", g[i]);
        }
    }
}
