//! Method plans: every hyperparameter is read from the config up front, then
//! `execute` runs the method against the ground-truth trajectory.

use peml_core::filter::{
    assumed_measurement_variance, run_filter, FilterInit, FilterKind, FilterModel, FilterSetup, NoiseConfig, PfConfig, UkfConfig,
    THETA_NAMES,
};
use peml_core::gp::{run_gp_task, GpOptConfig, KernelKind, KernelSpec, SdofPhysics};
use peml_core::nn::{Activation, AdamConfig, LbfgsConfig, MlpSpec, TrainConfig};
use peml_core::node::hnn::{energy_drift, field_error, hnn_train, integrate, DuffingHamiltonian, HnnBatch, HnnConfig, Separable, SymplecticScheme};
use peml_core::node::{run_node, write_rollout_csv, IntegratorKind, NodeConfig};
use peml_core::numkit::RngStream;
use peml_core::pgnn::{run_pgnn, PgnnConfig};
use peml_core::pinn::{
    run_enhanced_learning, run_equation_discovery, run_forward_model, run_pinn, write_param_csv, write_state_csv, BoundaryCondition,
    Observed, ParamEstimate, ParamSpec, PinnConfig, PinnData, PinnMode,
};
use peml_core::sim::{add_noise, rms, simulate_with, subsample, ForcingSpec, OscillatorParams, Selection, SimConfig, Trajectory, DEFAULT_FREQUENCIES};
use peml_core::sindy::{build_library, central_difference, default_features, stlsq, Feature, StlsqConfig};

use crate::config::Config;
use crate::report::{ComponentError, ParamError};
use crate::BenchError;

/// Ground-truth system, forcing and sampling grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSetup {
    pub params: OscillatorParams,
    pub forcing: ForcingSpec,
    pub grid: SimConfig,
}

impl SimSetup {
    pub fn from_config(cfg: &mut Config) -> Result<Self, BenchError> {
        let d = OscillatorParams::default();
        let s = "sim";
        let m = cfg.get(s, "m", d.m)?;
        let c = cfg.get(s, "c", d.c)?;
        let k = cfg.get(s, "k", d.k)?;
        let k3 = cfg.get(s, "k3", d.k3)?;
        let params = OscillatorParams::new(m, c, k, k3).map_err(|e| BenchError::field("sim", e))?;
        let grid = SimConfig {
            n: cfg.get(s, "n", 1024usize)?,
            rate: cfg.positive(s, "rate", 8.525)?,
            substeps: cfg.count(s, "substeps", 8)?,
            z0: [cfg.get(s, "u0", 0.0)?, cfg.get(s, "v0", 0.0)?],
        };
        if grid.n < 2 {
            return Err(BenchError::field("sim.n", "need at least 2 samples"));
        }
        let freqs = cfg.get_list(s, "frequencies", &DEFAULT_FREQUENCIES)?;
        let amplitude = cfg.get(s, "amplitude", 1.0)?;
        let phase_seed = cfg.get(s, "phase_seed", 0u64)?;
        let forcing = ForcingSpec::multisine(&freqs, amplitude, phase_seed).map_err(|e| BenchError::field("sim.frequencies", e))?;
        Ok(Self { params, forcing, grid })
    }

    pub fn simulate(&self) -> peml_core::Result<Trajectory> {
        simulate_with(&self.params, &self.forcing, &self.grid)
    }
}

fn mlp(cfg: &mut Config, s: &str, io: (usize, usize), width: usize, depth: usize, omega0: f64) -> Result<MlpSpec, BenchError> {
    let width = cfg.count(s, "width", width)?;
    let depth = cfg.count(s, "depth", depth)?;
    let act: String = cfg.get(s, "activation", "tanh".to_string())?;
    let act = Activation::parse(&act).ok_or_else(|| BenchError::field(&format!("{s}.activation"), format!("unknown activation `{act}`")))?;
    let omega0 = cfg.get(s, "omega0", omega0)?;
    let spec = MlpSpec::uniform(io.0, width, depth, io.1, act).map_err(|e| BenchError::field(s, e))?;
    Ok(if omega0 > 0.0 { spec.with_sine_first(omega0) } else { spec })
}

fn schedule(cfg: &mut Config, s: &str, adam_iters: usize, lbfgs_iters: usize) -> Result<TrainConfig, BenchError> {
    Ok(TrainConfig {
        adam: AdamConfig { lr: cfg.positive(s, "adam_lr", 1e-3)?, ..AdamConfig::default() },
        adam_iters: cfg.get(s, "adam_iters", adam_iters)?,
        lbfgs: LbfgsConfig { max_iter: cfg.get(s, "lbfgs_iters", lbfgs_iters)?, history: cfg.count(s, "lbfgs_history", 50)?, ..LbfgsConfig::default() },
    })
}

fn observed(cfg: &mut Config, s: &str, default: &str) -> Result<Observed, BenchError> {
    let v: String = cfg.get(s, "observed", default.to_string())?;
    match v.as_str() {
        "displacement" => Ok(Observed::Displacement),
        "full" => Ok(Observed::FullState),
        _ => Err(BenchError::field(&format!("{s}.observed"), format!("expected `displacement` or `full`, got `{v}`"))),
    }
}

fn pair(cfg: &mut Config, s: &str, key: &str, default: (f64, f64)) -> Result<(f64, f64), BenchError> {
    let v = cfg.get_list(s, key, &[default.0, default.1])?;
    match v.as_slice() {
        [a, b] if a < b => Ok((*a, *b)),
        _ => Err(BenchError::field(&format!("{s}.{key}"), "expected `lo, hi` with lo < hi")),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterPlan {
    pub kind: FilterKind,
    pub noise_ratio: f64,
    pub r_inflation: f64,
    pub setup: FilterSetup,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SindyPlan {
    pub features: Vec<Feature>,
    pub stlsq: StlsqConfig,
    pub noise_ratio: f64,
    pub central_difference: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpPlan {
    pub stride: usize,
    pub spec: KernelSpec,
    pub opt: Option<GpOptConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HnnPlan {
    pub starts: Vec<f64>,
    pub samples: usize,
    pub cfg: HnnConfig,
    pub field_grid: usize,
    pub rollout_start: f64,
    pub rollout_substeps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Plan {
    Filter(FilterPlan),
    Sindy(SindyPlan),
    NnBaseline { stride: usize, cfg: PinnConfig },
    Discovery { n_obs: usize, cfg: PinnConfig },
    Enhanced { stride: usize, informed: PinnConfig, baseline: PinnConfig },
    Forward { cfg: PinnConfig },
    Pgnn { stride: usize, cfg: PgnnConfig },
    Gp(GpPlan),
    Node { integrator: IntegratorKind, cfg: NodeConfig },
    Hnn(HnnPlan),
}

impl Plan {
    /// Reads the `[method]` section; `seed` drives every random stream.
    pub fn from_config(method: &str, cfg: &mut Config, sim: &SimSetup, seed: u64) -> Result<Self, BenchError> {
        let s = method;
        let truth = &sim.params;
        let h = 1.0 / sim.grid.rate;
        Ok(match method {
            "ukf" | "pf" => {
                let kind = if method == "ukf" { FilterKind::Ukf } else { FilterKind::Pf };
                let d = FilterInit::default();
                let init = FilterInit {
                    z0: sim.grid.z0,
                    z_var: [cfg.positive(s, "var_u", d.z_var[0])?, cfg.positive(s, "var_v", d.z_var[1])?],
                    theta0: [cfg.positive(s, "k0", d.theta0[0])?, cfg.positive(s, "c0", d.theta0[1])?, cfg.positive(s, "k3_0", d.theta0[2])?],
                    theta_var: [cfg.positive(s, "var_k", d.theta_var[0])?, cfg.positive(s, "var_c", d.theta_var[1])?, cfg.positive(s, "var_k3", d.theta_var[2])?],
                    theta_box: if kind == FilterKind::Pf {
                        [pair(cfg, s, "box_k", d.theta_box[0])?, pair(cfg, s, "box_c", d.theta_box[1])?, pair(cfg, s, "box_k3", d.theta_box[2])?]
                    } else {
                        d.theta_box
                    },
                };
                let noise = NoiseConfig {
                    q_v: cfg.get(s, "q_v", 1e-18)?,
                    q_theta: cfg.get(s, "q_theta", if kind == FilterKind::Ukf { 1e-18 } else { 1e-4 })?,
                    r: 0.0,
                };
                noise.validate().map_err(|e| BenchError::field(s, e))?;
                let (ukf, pf) = match kind {
                    FilterKind::Ukf => {
                        let u = UkfConfig::default();
                        (UkfConfig { alpha: cfg.positive(s, "alpha", u.alpha)?, beta: cfg.get(s, "beta", u.beta)?, kappa: cfg.get(s, "kappa", u.kappa)? }, PfConfig::default())
                    }
                    FilterKind::Pf => {
                        let p = PfConfig::default();
                        (UkfConfig::default(), PfConfig { particles: cfg.count(s, "particles", p.particles)?, ess_fraction: cfg.get(s, "ess_fraction", p.ess_fraction)? })
                    }
                };
                Plan::Filter(FilterPlan {
                    kind,
                    noise_ratio: cfg.get(s, "noise_ratio", 0.085)?,
                    r_inflation: cfg.positive(s, "r_inflation", 2.0)?,
                    setup: FilterSetup { model: FilterModel::joint(truth.m, h), init, noise, ukf, pf },
                })
            }
            "sindy" => {
                let names: Vec<String> = default_features().iter().map(Feature::name).collect();
                let list: String = cfg.get(s, "features", names.join(","))?;
                let features = list
                    .split(',')
                    .map(|f| Feature::parse(f).ok_or_else(|| BenchError::field("sindy.features", format!("unknown feature `{}`", f.trim()))))
                    .collect::<Result<Vec<_>, _>>()?;
                let d = StlsqConfig::default();
                let target: String = cfg.get(s, "target", "measured".to_string())?;
                let central_difference = match target.as_str() {
                    "measured" => false,
                    "central-difference" => true,
                    _ => return Err(BenchError::field("sindy.target", format!("expected `measured` or `central-difference`, got `{target}`"))),
                };
                Plan::Sindy(SindyPlan {
                    features,
                    stlsq: StlsqConfig { threshold: cfg.get(s, "threshold", d.threshold)?, ridge: cfg.get(s, "ridge", d.ridge)?, max_iter: cfg.count(s, "max_iter", d.max_iter)? },
                    noise_ratio: cfg.get(s, "noise_ratio", 0.0)?,
                    central_difference,
                })
            }
            "nn-baseline" => {
                let base = PinnConfig::for_mode(PinnMode::DataDriven, truth, seed);
                let cfg_ = PinnConfig {
                    net: mlp(cfg, s, (1, 2), 32, 3, 60.0)?,
                    train: schedule(cfg, s, base.train.adam_iters, base.train.lbfgs.max_iter)?,
                    observed: observed(cfg, s, "displacement")?,
                    ..base
                };
                Plan::NnBaseline { stride: cfg.count(s, "stride", 16)?, cfg: cfg_ }
            }
            "pinn-discovery" => {
                let base = PinnConfig::for_mode(PinnMode::EquationDiscovery, truth, seed);
                let nonlinear = cfg.get(s, "nonlinear", true)?;
                let params = peml_core::pinn::PhysicalParams {
                    m: ParamSpec::Known(truth.m),
                    c: ParamSpec::Trainable { init: cfg.positive(s, "init_c", 0.5)? },
                    k: ParamSpec::Trainable { init: cfg.positive(s, "init_k", 5.0)? },
                    k3: if nonlinear { ParamSpec::Trainable { init: cfg.positive(s, "init_k3", 30.0)? } } else { ParamSpec::Known(0.0) },
                };
                let cfg_ = PinnConfig {
                    params,
                    net: mlp(cfg, s, (1, 2), 32, 3, 60.0)?,
                    train: schedule(cfg, s, 0, 500)?,
                    warmup_iters: cfg.get(s, "warmup_iters", base.warmup_iters)?,
                    restarts: cfg.count(s, "restarts", base.restarts)?,
                    observed: observed(cfg, s, "full")?,
                    ..base
                };
                Plan::Discovery { n_obs: cfg.count(s, "n_obs", 256)?, cfg: cfg_ }
            }
            "pinn-enhanced" => {
                let base = PinnConfig::for_mode(PinnMode::PhysicsInformed, truth, seed);
                let informed = PinnConfig {
                    net: mlp(cfg, s, (1, 2), 32, 2, 10.0)?,
                    train: schedule(cfg, s, 0, 500)?,
                    windows: cfg.count(s, "windows", base.windows)?,
                    retry_tol: cfg.get(s, "retry_tol", base.retry_tol)?,
                    max_retries: cfg.get(s, "max_retries", base.max_retries)?,
                    bc: Some(BoundaryCondition { xi: sim.grid.z0, time: 0.0 }),
                    ..base
                };
                let bd = PinnConfig::for_mode(PinnMode::DataDriven, truth, seed);
                let bs = "pinn-enhanced.baseline";
                let baseline = PinnConfig { net: mlp(cfg, bs, (1, 2), 32, 3, 60.0)?, train: schedule(cfg, bs, bd.train.adam_iters, bd.train.lbfgs.max_iter)?, ..bd };
                Plan::Enhanced { stride: cfg.count(s, "stride", 16)?, informed, baseline }
            }
            "pinn-forward" => {
                let base = PinnConfig::for_mode(PinnMode::ForwardModeller, truth, seed);
                let cfg_ = PinnConfig {
                    net: mlp(cfg, s, (1, 2), 32, 2, 10.0)?,
                    train: schedule(cfg, s, 0, 500)?,
                    windows: cfg.count(s, "windows", base.windows)?,
                    retry_tol: cfg.get(s, "retry_tol", base.retry_tol)?,
                    max_retries: cfg.get(s, "max_retries", base.max_retries)?,
                    bc: Some(BoundaryCondition { xi: sim.grid.z0, time: 0.0 }),
                    ..base
                };
                Plan::Forward { cfg: cfg_ }
            }
            "pgnn" => {
                let d = PgnnConfig::default();
                let cfg_ = PgnnConfig {
                    net: mlp(cfg, s, (1, 2), 32, 3, 60.0)?,
                    train: schedule(cfg, s, 0, 500)?,
                    restarts: cfg.count(s, "restarts", d.restarts)?,
                    residual_penalty: cfg.get(s, "residual_penalty", d.residual_penalty)?,
                    kinematic_weight: cfg.get(s, "kinematic_weight", d.kinematic_weight)?,
                    seed,
                };
                Plan::Pgnn { stride: cfg.count(s, "stride", 4)?, cfg: cfg_ }
            }
            "gp-se" | "gp-sdof" => {
                let kind = if method == "gp-se" {
                    KernelKind::Se { l: cfg.positive(s, "l", 1.0)?, alpha: cfg.positive(s, "alpha", 0.2)? }
                } else {
                    let physics = SdofPhysics { m: cfg.positive(s, "m", truth.m)?, c: cfg.positive(s, "c", truth.c)?, k: cfg.positive(s, "k", truth.k)? };
                    KernelKind::Sdof { sigma_f: cfg.positive(s, "sigma_f", 1.0)?, physics }
                };
                let spec = KernelSpec { kind, noise_var: cfg.positive(s, "noise_var", 1e-4)? };
                spec.validate().map_err(|e| BenchError::field(s, e))?;
                let d = GpOptConfig::default();
                let opt = if cfg.get(s, "optimize", true)? {
                    Some(GpOptConfig { restarts: cfg.count(s, "restarts", d.restarts)?, steps: cfg.get(s, "steps", d.steps)?, lr: cfg.positive(s, "lr", d.lr)?, seed })
                } else {
                    None
                };
                Plan::Gp(GpPlan { stride: cfg.count(s, "stride", 12)?, spec, opt })
            }
            "node" => {
                let name: String = cfg.get(s, "integrator", "rk4".to_string())?;
                let integrator = IntegratorKind::parse(&name).ok_or_else(|| BenchError::field("node.integrator", format!("unknown integrator `{name}`")))?;
                let cfg_ = NodeConfig { net: mlp(cfg, s, (3, 2), 32, 2, 0.0)?, train: schedule(cfg, s, 2000, 1000)?, seed };
                Plan::Node { integrator, cfg: cfg_ }
            }
            "hnn" => {
                let net = mlp(cfg, s, (1, 1), 32, 2, 0.0)?;
                let cfg_ = HnnConfig { t_net: net.clone(), v_net: net, train: schedule(cfg, s, 0, 2000)?, seed };
                Plan::Hnn(HnnPlan {
                    starts: cfg.get_list(s, "starts", &[0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4])?,
                    samples: cfg.count(s, "samples", 128)?,
                    cfg: cfg_,
                    field_grid: cfg.count(s, "field_grid", 20)?,
                    rollout_start: cfg.get(s, "rollout_start", 0.3)?,
                    rollout_substeps: cfg.count(s, "rollout_substeps", 8)?,
                })
            }
            other => return Err(BenchError::field("method", format!("unknown method `{other}`"))),
        })
    }
}

/// What a finished method hands back: named CSV payloads and metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MethodOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub components: Vec<ComponentError>,
    pub params: Vec<ParamError>,
    pub extra: Vec<(String, f64)>,
}

impl MethodOutput {
    fn file(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> peml_core::Result<()>) -> peml_core::Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    fn state(&mut self, u_hat: &[f64], v_hat: &[f64], truth: &Trajectory) {
        self.components.push(ComponentError::new("u", u_hat, &truth.u));
        self.components.push(ComponentError::new("v", v_hat, &truth.v));
    }

    fn extra(&mut self, name: &str, v: f64) {
        self.extra.push((name.to_string(), v));
    }
}

fn param_rows(rows: &[ParamEstimate]) -> Vec<ParamError> {
    rows.iter().map(|r| ParamError::new(r.name, r.estimate, r.truth)).collect()
}

/// Runs `plan` on `truth`, the trajectory simulated from `sim`.
pub fn execute(plan: &Plan, sim: &SimSetup, truth: &Trajectory, seed: u64) -> peml_core::Result<MethodOutput> {
    let mut out = MethodOutput::default();
    let p = &sim.params;
    match plan {
        Plan::Filter(fp) => {
            let y = add_noise(&truth.a, fp.noise_ratio, &mut RngStream::new(seed).substream("measurement-noise"))?;
            let mut setup = fp.setup.clone();
            setup.noise.r = assumed_measurement_variance(&truth.a, fp.noise_ratio, fp.r_inflation);
            let res = run_filter(fp.kind, truth, &y, &setup, &mut RngStream::new(seed).substream("pf"))?;
            let u: Vec<f64> = res.mean.iter().map(|m| m[0]).collect();
            let v: Vec<f64> = res.mean.iter().map(|m| m[1]).collect();
            out.state(&u, &v, truth);
            let theta = res.final_theta().unwrap_or([f64::NAN; 3]);
            let rows: Vec<ParamEstimate> = [p.k, p.c, p.k3]
                .iter()
                .enumerate()
                .map(|(i, &t)| ParamEstimate { name: THETA_NAMES[i], truth: t, estimate: theta[i], percent_error: peml_core::metrics::percent_error(theta[i], t) })
                .collect();
            out.params = param_rows(&rows);
            if fp.kind == FilterKind::Pf {
                out.extra("resamples", res.resamples as f64);
            }
            out.file("filter.csv", |b| res.write_csv(b))?;
            out.file("params.csv", |b| write_param_csv(b, &rows))?;
        }
        Plan::Sindy(sp) => {
            let mut data = truth.clone();
            data.a = add_noise(&truth.a, sp.noise_ratio, &mut RngStream::new(seed).substream("measurement-noise"))?;
            let lib = build_library(&data, &sp.features)?;
            let acc = if sp.central_difference { central_difference(&data.v, 1.0 / sim.grid.rate) } else { data.a.clone() };
            let y: Vec<f64> = acc.iter().map(|a| a * p.m).collect();
            let coef = stlsq(&lib, &y, &sp.stlsq)?;
            let fit: Vec<f64> = lib.theta.matvec(&coef.xi).iter().map(|x| x / p.m).collect();
            out.components.push(ComponentError::new("a", &fit, &truth.a));
            let mut rows = Vec::new();
            for (name, feat, truth_v) in [("c", "v", p.c), ("k", "u", p.k), ("k3", "u^3", p.k3)] {
                if let Some(x) = coef.coefficient(feat) {
                    rows.push(ParamEstimate { name, truth: truth_v, estimate: -x, percent_error: peml_core::metrics::percent_error(-x, truth_v) });
                }
            }
            out.params = param_rows(&rows);
            out.extra("active_terms", coef.active().len() as f64);
            out.file("coefficients.csv", |b| coef.write_csv(b))?;
            out.file("params.csv", |b| write_param_csv(b, &rows))?;
        }
        Plan::NnBaseline { stride, cfg } => {
            let (domain, _) = subsample(truth, Selection::Stride(*stride))?;
            let res = run_pinn(cfg, &PinnData::from_trajectory(truth, &domain.observation, cfg.observed))?;
            out.state(&res.u_hat, &res.v_hat, truth);
            out.file("state.csv", |b| write_state_csv(b, truth, &res))?;
        }
        Plan::Discovery { n_obs, cfg } => {
            let (res, table) = run_equation_discovery(truth, cfg, *n_obs, p)?;
            out.state(&res.u_hat, &res.v_hat, truth);
            out.params = param_rows(&table);
            out.file("state.csv", |b| write_state_csv(b, truth, &res))?;
            out.file("params.csv", |b| write_param_csv(b, &table))?;
        }
        Plan::Enhanced { stride, informed, baseline } => {
            let o = run_enhanced_learning(truth, *stride, informed, baseline)?;
            out.state(&o.informed.u_hat, &o.informed.v_hat, truth);
            out.extra("baseline_rmse_u", o.rmse_u_baseline);
            out.extra("baseline_rmse_v", o.rmse_v_baseline);
            out.extra("ratio_u", o.rmse_u_informed / o.rmse_u_baseline);
            out.file("state.csv", |b| write_state_csv(b, truth, &o.informed))?;
            out.file("baseline.csv", |b| write_state_csv(b, truth, &o.baseline))?;
        }
        Plan::Forward { cfg } => {
            let (res, e) = run_forward_model(truth, cfg)?;
            out.state(&res.u_hat, &res.v_hat, truth);
            out.extra("relative_rmse_u", e / rms(&truth.u));
            out.file("state.csv", |b| write_state_csv(b, truth, &res))?;
        }
        Plan::Pgnn { stride, cfg } => {
            let o = run_pgnn(truth, p, &sim.forcing, &sim.grid, *stride, cfg)?;
            out.state(&o.result.u_hat, &o.result.v_hat, truth);
            out.extra("prior_rmse_u", o.rmse_u_prior);
            out.extra("prior_rmse_v", o.rmse_v_prior);
            out.file("pgnn.csv", |b| peml_core::pgnn::write_csv(b, truth, &o))?;
        }
        Plan::Gp(gp) => {
            let o = run_gp_task(truth, gp.stride, &gp.spec, gp.opt.as_ref())?;
            out.components.push(ComponentError::new("u", &o.pred.mean, &truth.u));
            out.extra("mean_sd", o.mean_sd);
            out.extra("coverage_2sd", o.coverage);
            out.extra("log_marginal", o.model.log_marginal);
            out.extra("noise_var", o.model.spec.noise_var);
            match &o.model.spec.kind {
                KernelKind::Se { l, alpha } => {
                    out.extra("l", *l);
                    out.extra("alpha", *alpha);
                }
                KernelKind::Sdof { sigma_f, .. } => out.extra("sigma_f", *sigma_f),
                KernelKind::Sum(_) => {}
            }
            out.file("gp.csv", |b| peml_core::gp::write_csv(b, truth, &o.pred))?;
        }
        Plan::Node { integrator, cfg } => {
            let o = run_node(truth, &sim.forcing, *integrator, cfg)?;
            out.state(&o.u_hat, &o.v_hat, truth);
            out.extra("relative_rmse_u", o.rmse_u / rms(&truth.u));
            out.file("rollout.csv", |b| write_rollout_csv(b, truth, &o.u_hat, &o.v_hat, None))?;
        }
        Plan::Hnn(hp) => {
            let batch = HnnBatch::conservative(p, &hp.starts, &SimConfig { n: hp.samples, ..sim.grid })?;
            let r = hnn_train(&batch, p.m, &hp.cfg)?;
            let amax = |x: &[f64]| x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let exact = DuffingHamiltonian::from_params(p);
            out.extra("field_error", field_error(&r.net, &exact, amax(&batch.q), amax(&batch.p), hp.field_grid));
            // free conservative reference over the configured grid
            let cons = OscillatorParams { c: 0.0, ..*p };
            let reference = simulate_with(&cons, &ForcingSpec::zero(), &SimConfig { z0: [hp.rollout_start, 0.0], ..sim.grid })?;
            let h = 1.0 / (sim.grid.rate * hp.rollout_substeps as f64);
            let steps = (reference.len() - 1) * hp.rollout_substeps;
            let (zs, es) = integrate(&r.net, (hp.rollout_start, 0.0), h, steps, SymplecticScheme::SymplecticEuler);
            let kept: Vec<(f64, f64)> = zs.iter().step_by(hp.rollout_substeps).copied().collect();
            let u_hat: Vec<f64> = kept.iter().map(|z| z.0).collect();
            let v_hat: Vec<f64> = kept.iter().map(|z| z.1 / p.m).collect();
            let h_hat: Vec<f64> = kept.iter().map(|&(q, pp)| r.net.energy(q, pp)).collect();
            out.state(&u_hat, &v_hat, &reference);
            out.extra("energy_drift", energy_drift(&es));
            out.file("rollout.csv", |b| write_rollout_csv(b, &reference, &u_hat, &v_hat, Some(&h_hat)))?;
        }
    }
    Ok(out)
}
