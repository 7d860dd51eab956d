//! End-to-end acceptance run over the shipped configs.
//!
//! Prints one PASS/FAIL line per criterion. Criteria that train models run
//! the shipped config through the harness, and the same runs feed the
//! determinism check at the end. The process fails if any criterion fails
//! other than those listed in `KNOWN_FAILURES`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2, Vector2};
use peml_bench::report::MetricReport;
use peml_bench::{Experiment, Overrides};
use peml_core::filter::{
    assumed_measurement_variance, pf_step, run_filter, FilterInit, FilterKind, FilterModel, FilterSetup, GaussianBelief, NoiseConfig,
    ParticleEnsemble, PfConfig, StepInput, UkfConfig,
};
use peml_core::gp::{fit, kernel_eval, log_marginal_and_grad, KernelKind, KernelSpec, SdofPhysics};
use peml_core::nn::{Activation, MlpSpec};
use peml_core::node::hnn::{
    energy_drift, hnn_loss, integrate, step_jacobian, symplectic_defect, DuffingHamiltonian, HamiltonianNet, HnnBatch, SymplecticScheme,
};
use peml_core::node::{global_error_ratio, local_error_ratio, IntegratorKind, IntegratorSpec, OdeFunc, StepDataset, StepLoss};
use peml_core::numkit::check::{central_difference, random_graph_suite, relative_error};
use peml_core::numkit::RngStream;
use peml_core::pgnn::{GuidedLoss, PgnnConfig};
use peml_core::pinn::{discovery_config, Observed, PinnConfig, PinnData, PinnMode, WindowProblem};
use peml_core::sim::{add_noise, rms, simulate_with, ForcingSpec, OscillatorParams, SimConfig};
use peml_core::sindy::{default_features, identify, StlsqConfig};

/// Criteria expected to print FAIL on the shipped settings; see README.
const KNOWN_FAILURES: &[u32] = &[9];

const RATE: f64 = 8.525;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

struct Runs {
    root: PathBuf,
    done: BTreeMap<String, (Result<MetricReport, String>, f64)>,
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

impl Runs {
    fn dir(&self, name: &str, pass: &str) -> PathBuf {
        self.root.join(pass).join(name)
    }

    fn run_into(&self, name: &str, out: PathBuf) -> Result<MetricReport, String> {
        let text = fs::read_to_string(configs_dir().join(format!("{name}.cfg"))).map_err(|e| e.to_string())?;
        let exp = Experiment::load(&text, &Overrides { seed: None, out: Some(out) }, true).map_err(|e| e.to_string())?;
        exp.run().map_err(|e| e.to_string())
    }

    /// First run of a shipped config, cached; returns the report and seconds.
    fn get(&mut self, name: &str) -> (Result<MetricReport, String>, f64) {
        if !self.done.contains_key(name) {
            let t = Instant::now();
            let r = self.run_into(name, self.dir(name, "first"));
            self.done.insert(name.to_string(), (r, t.elapsed().as_secs_f64()));
        }
        self.done[name].clone()
    }
}

fn extra(r: &MetricReport, key: &str) -> f64 {
    r.extra.get(key).copied().unwrap_or(f64::NAN)
}

fn comp(r: &MetricReport, name: &str) -> f64 {
    r.component(name).map_or(f64::NAN, |c| c.rmse)
}

fn param_errors(r: &MetricReport) -> String {
    r.params.iter().map(|p| format!("{}={:.4} ({:.2}%)", p.name, p.estimate, p.percent_error)).collect::<Vec<_>>().join(" ")
}

/// Independent classical RK4 with `refine` steps per sample, for the
/// linear oscillator only.
fn rk4_oracle(p: &OscillatorParams, f: &ForcingSpec, n: usize, refine: usize) -> Vec<f64> {
    let h = 1.0 / (RATE * refine as f64);
    let rhs = |t: f64, u: f64, v: f64| (v, (f.eval(t) - p.c * v - p.k * u) / p.m);
    let (mut u, mut v) = (0.0, 0.0);
    let mut out = vec![0.0];
    for i in 1..n {
        for s in 0..refine {
            let t = ((i - 1) * refine + s) as f64 * h;
            let (a1, b1) = rhs(t, u, v);
            let (a2, b2) = rhs(t + h / 2.0, u + h / 2.0 * a1, v + h / 2.0 * b1);
            let (a3, b3) = rhs(t + h / 2.0, u + h / 2.0 * a2, v + h / 2.0 * b2);
            let (a4, b4) = rhs(t + h, u + h * a3, v + h * b3);
            u += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        }
        out.push(u);
    }
    out
}

fn c1_simulator() -> Verdict {
    let p = OscillatorParams::default().linear();
    let f = ForcingSpec::default_with_seed(0);
    let tr = simulate_with(&p, &f, &SimConfig::default()).unwrap();
    let oracle = rk4_oracle(&p, &f, tr.len(), 800);
    let rel = peml_core::metrics::rmse(&tr.u, &oracle) / rms(&oracle);
    let cons = OscillatorParams { c: 0.0, ..OscillatorParams::default() };
    let free = simulate_with(&cons, &ForcingSpec::zero(), &SimConfig { z0: [0.3, 0.0], ..SimConfig::default() }).unwrap();
    let e: Vec<f64> = (0..free.len()).map(|i| cons.energy(free.u[i], free.v[i])).collect();
    let drift = energy_drift(&e);
    verdict(rel < 1e-6 && drift < 1e-6, format!("relative RMSE(u) {rel:.2e}, energy drift {drift:.2e}"))
}

fn fd_check(mut f: impl FnMut(&[f64]) -> (f64, Vec<f64>), x: &[f64]) -> f64 {
    let (_, g) = f(x);
    let fd = central_difference(|y| f(y).0, x, 1e-6);
    relative_error(&g, &fd)
}

fn c2_autodiff() -> Verdict {
    let graphs = random_graph_suite(0, 100, 6, 1e-5).unwrap();
    let p = OscillatorParams::default();
    let tr = simulate_with(&p, &ForcingSpec::default_with_seed(0), &SimConfig { n: 64, ..SimConfig::default() }).unwrap();
    let small = MlpSpec::uniform(1, 8, 2, 2, Activation::Tanh).unwrap().with_sine_first(3.0);
    let mut rng = RngStream::new(7);
    let mut worst: Vec<(&str, f64)> = Vec::new();

    let mut disc = discovery_config(&p, true, 0);
    disc.net = small.clone();
    let obs: Vec<usize> = (0..tr.len()).step_by(4).collect();
    let data = PinnData::from_trajectory(&tr, &obs, Observed::FullState);
    let wp = WindowProblem::over(&disc, &data, 0, tr.len() - 1).unwrap();
    let mut theta = small.init(&mut rng);
    theta.extend([0.1, -0.2, 0.3]);
    worst.push(("pinn-discovery", fd_check(|t| wp.loss_grad(t).unwrap(), &theta)));

    let fwd = PinnConfig { net: small.clone(), windows: 1, ..PinnConfig::for_mode(PinnMode::ForwardModeller, &p, 0) };
    let wp = WindowProblem::over(&fwd, &PinnData::forward_only(&tr), 0, 20).unwrap();
    let theta = small.init(&mut rng);
    worst.push(("pinn-forward", fd_check(|t| wp.loss_grad(t).unwrap(), &theta)));

    let pg = PgnnConfig { net: small.clone(), ..PgnnConfig::default() };
    let prior = simulate_with(&p.linear(), &ForcingSpec::default_with_seed(0), &SimConfig { n: 64, ..SimConfig::default() }).unwrap();
    let u_obs: Vec<f64> = obs.iter().map(|&i| tr.u[i]).collect();
    let gl = GuidedLoss::new(&prior, &obs, &u_obs, &pg).unwrap();
    let theta = small.init(&mut rng);
    worst.push(("pgnn", fd_check(|t| gl.loss_grad(t).unwrap(), &theta)));

    let ds = StepDataset::from_trajectory(&tr, &ForcingSpec::default_with_seed(0)).unwrap();
    let spec = MlpSpec::uniform(3, 6, 2, 2, Activation::Tanh).unwrap();
    let theta = spec.init(&mut rng);
    for kind in [IntegratorKind::ExplicitEuler, IntegratorKind::Rk4, IntegratorKind::SymplecticEuler, IntegratorKind::Leapfrog] {
        let func = OdeFunc::new(spec.clone(), theta.clone(), [0.0; 3], [0.3, 1.0, 1.0], [1.0, 3.0]).unwrap();
        let sl = StepLoss::new(func, &ds, IntegratorSpec::new(kind, 1.0 / RATE).unwrap());
        worst.push((kind.name(), fd_check(|t| sl.loss_grad(t).unwrap(), &theta)));
    }

    let batch = HnnBatch::conservative(&p, &[0.15, 0.35], &SimConfig { n: 20, ..SimConfig::default() }).unwrap();
    let hs = MlpSpec::uniform(1, 6, 2, 1, Activation::Tanh).unwrap();
    let net = HamiltonianNet::new(hs.clone(), hs, p.m, [0.4, 6.0, 2.0], &mut rng).unwrap();
    worst.push(("hnn", fd_check(|t| hnn_loss(&net.with_params(t), &batch).unwrap(), &net.params())));

    let x: Vec<f64> = tr.t.iter().step_by(3).copied().collect();
    let y: Vec<f64> = tr.u.iter().step_by(3).copied().collect();
    let phys = SdofPhysics { m: p.m, c: p.c, k: p.k };
    let spec = KernelSpec { kind: KernelKind::Sum(vec![KernelKind::Se { l: 0.7, alpha: 0.1 }, KernelKind::Sdof { sigma_f: 0.5, physics: phys }]), noise_var: 1e-3 };
    worst.push(("gp-lml", fd_check(|h| log_marginal_and_grad(&x, &y, &spec.with_log_hyper(h)).unwrap(), &spec.log_hyper())));

    let module = worst.iter().fold(0.0f64, |a, w| a.max(w.1));
    let list = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    verdict(graphs < 1e-6 && module < 1e-5, format!("100 graphs {graphs:.1e}; losses: {list}"))
}

/// Textbook KF for the RK4-discretized linear oscillator with linearly
/// interpolated forcing.
struct Kf {
    phi: Matrix2<f64>,
    a: Matrix2<f64>,
    b: Vector2<f64>,
    h: f64,
    hrow: RowVector2<f64>,
    m: f64,
}

impl Kf {
    fn new(p: &OscillatorParams, h: f64) -> Self {
        let a = Matrix2::new(0.0, 1.0, -p.k / p.m, -p.c / p.m);
        let phi = Matrix2::identity() + a * h + a * a * (h * h / 2.0) + a * a * a * (h.powi(3) / 6.0) + a * a * a * a * (h.powi(4) / 24.0);
        Self { phi, a, b: Vector2::new(0.0, 1.0 / p.m), h, hrow: RowVector2::new(-p.k / p.m, -p.c / p.m), m: p.m }
    }

    fn step(&self, x: &mut Vector2<f64>, p: &mut Matrix2<f64>, f0: f64, f1: f64, y: f64, qv: f64, r: f64) {
        let (a, b, h) = (self.a, self.b, self.h);
        let fm = 0.5 * (f0 + f1);
        let k1 = b * f0;
        let k2 = a * (k1 * (h / 2.0)) + b * fm;
        let k3 = a * (k2 * (h / 2.0)) + b * fm;
        let k4 = a * (k3 * h) + b * f1;
        *x = self.phi * *x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        *p = self.phi * *p * self.phi.transpose() + Matrix2::new(0.0, 0.0, 0.0, qv);
        let yhat = (self.hrow * *x)[0] + f1 / self.m;
        let s = (self.hrow * *p * self.hrow.transpose())[0] + r;
        let k = *p * self.hrow.transpose() / s;
        *x += k * (y - yhat);
        *p -= k * s * k.transpose();
    }
}

fn c3_filters(runs: &mut Runs) -> (Verdict, f64) {
    let t0 = Instant::now();
    let p = OscillatorParams::default().linear();
    let tr = simulate_with(&p, &ForcingSpec::default_with_seed(5), &SimConfig { n: 400, ..SimConfig::default() }).unwrap();
    let y = add_noise(&tr.a, 0.085, &mut RngStream::new(5).substream("measurement-noise")).unwrap();
    let r = assumed_measurement_variance(&tr.a, 0.085, 1.0);
    let setup = |qv: f64| FilterSetup {
        model: FilterModel::linear_known(&p, 1.0 / RATE),
        init: FilterInit { z0: [0.01, -0.01], z_var: [1e-4, 1e-4], ..FilterInit::default() },
        noise: NoiseConfig { q_v: qv, q_theta: 0.0, r },
        ukf: UkfConfig::default(),
        pf: PfConfig::default(),
    };
    let kf = Kf::new(&p, 1.0 / RATE);

    let ukf = run_filter(FilterKind::Ukf, &tr, &y, &setup(1e-6), &mut RngStream::new(0)).unwrap();
    let (mut x, mut pk) = (Vector2::new(0.01, -0.01), Matrix2::from_diagonal(&Vector2::new(1e-4, 1e-4)));
    let mut ukf_gap = 0.0f64;
    for i in 1..tr.len() {
        kf.step(&mut x, &mut pk, tr.f[i - 1], tr.f[i], y[i], 1e-6, r);
        ukf_gap = ukf_gap.max((ukf.mean[i][0] - x[0]).abs()).max((ukf.mean[i][1] - x[1]).abs());
    }

    let s = setup(1e-4);
    let mut rng = RngStream::new(11).substream("pf");
    let mut ens = ParticleEnsemble::from_gaussian(&GaussianBelief::from_init(&s.model, &s.init), 1000, &mut rng).unwrap();
    let (mut x, mut pk) = (Vector2::new(0.01, -0.01), Matrix2::from_diagonal(&Vector2::new(1e-4, 1e-4)));
    let mut pf_z = 0.0f64;
    for i in 1..300 {
        pf_step(&mut ens, &s.model, &StepInput { index: i, f_prev: tr.f[i - 1], f: tr.f[i], y: y[i] }, &s.noise, &s.pf, &mut rng).unwrap();
        kf.step(&mut x, &mut pk, tr.f[i - 1], tr.f[i], y[i], 1e-4, r);
        let (mean, _) = ens.summary(&s.model);
        for j in 0..2 {
            pf_z = pf_z.max((mean[j] - x[j]).abs() / pk[(j, j)].sqrt());
        }
    }
    let linear_ok = ukf_gap < 1e-8 && pf_z < 3.0;
    let mut ok = linear_ok;
    let mut detail = format!("linear: UKF gap {ukf_gap:.1e}, PF max |z| {pf_z:.2}");
    for (name, tol) in [("ukf", 10.0), ("pf", 15.0)] {
        match runs.get(name).0 {
            Ok(rep) => {
                let worst = rep.params.iter().map(|p| p.percent_error).fold(0.0f64, f64::max);
                ok &= rep.params.len() == 3 && worst < tol;
                detail.push_str(&format!("; {name} {}", param_errors(&rep)));
            }
            Err(e) => {
                ok = false;
                detail.push_str(&format!("; {name} error: {e}"));
            }
        }
    }
    (verdict(ok, detail), t0.elapsed().as_secs_f64() + runs.get("ukf").1 + runs.get("pf").1)
}

fn nonzero_features(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("coefficients.csv")).unwrap_or_default();
    text.lines()
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .filter(|(_, c)| c.parse::<f64>().map_or(false, |x| x != 0.0))
        .map(|(n, _)| n.to_string())
        .collect()
}

fn c4_sindy(runs: &mut Runs) -> Verdict {
    let (rep, _) = runs.get("sindy");
    let Ok(rep) = rep else { return verdict(false, "harness run failed") };
    let support = nonzero_features(&runs.dir("sindy", "first"));
    let coef_ok = rep.params.len() == 3 && rep.params.iter().all(|p| p.percent_error < 1.0);
    let lin = OscillatorParams::default().linear();
    let tr = simulate_with(&lin, &ForcingSpec::default_with_seed(0), &SimConfig::default()).unwrap();
    let s = identify(&tr, &default_features(), lin.m, &StlsqConfig::default()).unwrap();
    let f_ok = s.coefficient("f").is_some_and(|f| (f - 1.0).abs() < 0.01);
    let ok = support == ["u", "v", "u^3", "f"] && coef_ok && f_ok && s.active() == ["u", "v", "f"];
    verdict(ok, format!("support {support:?}, {}; linear support {:?}", param_errors(&rep), s.active()))
}

fn c5_discovery(runs: &mut Runs) -> (Verdict, f64) {
    let (rep, secs) = runs.get("pinn-discovery");
    let v = match rep {
        Ok(r) => verdict(r.params.len() == 3 && r.params.iter().all(|p| p.percent_error < 5.0) && secs < 300.0, param_errors(&r)),
        Err(e) => verdict(false, e),
    };
    (v, secs)
}

fn c6_enhanced(runs: &mut Runs) -> (Verdict, f64) {
    let (rep, secs) = runs.get("pinn-enhanced");
    let v = match rep {
        Ok(r) => {
            let (inf, base) = (comp(&r, "u"), extra(&r, "baseline_rmse_u"));
            verdict(inf < base && inf < 0.5 * base && secs < 300.0, format!("RMSE(u) informed {inf:.3e} vs data-only {base:.3e} (ratio {:.3})", inf / base))
        }
        Err(e) => verdict(false, e),
    };
    (v, secs)
}

fn c7_forward(runs: &mut Runs) -> (Verdict, f64) {
    let (rep, secs) = runs.get("pinn-forward");
    let v = match rep {
        Ok(r) => {
            let rel = extra(&r, "relative_rmse_u");
            verdict(rel < 0.05 && secs < 300.0, format!("RMSE(u)/RMS(u) {rel:.4}"))
        }
        Err(e) => verdict(false, e),
    };
    (v, secs)
}

fn c8_pgnn(runs: &mut Runs) -> (Verdict, f64) {
    let (rep, secs) = runs.get("pgnn");
    let v = match rep {
        Ok(r) => {
            let (u, v, pu, pv) = (comp(&r, "u"), comp(&r, "v"), extra(&r, "prior_rmse_u"), extra(&r, "prior_rmse_v"));
            verdict(u < pu && v < pv && secs < 180.0, format!("RMSE(u) {u:.3e} vs prior {pu:.3e}, RMSE(v) {v:.3e} vs prior {pv:.3e}"))
        }
        Err(e) => verdict(false, e),
    };
    (v, secs)
}

fn dense_lml(x: &[f64], y: &[f64], spec: &KernelSpec) -> f64 {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel_eval(spec, x[i], x[j]).unwrap() + if i == j { spec.noise_var } else { 0.0 });
    let yv = DVector::from_column_slice(y);
    let lu = k.lu();
    let a = lu.solve(&yv).unwrap();
    -0.5 * yv.dot(&a) - 0.5 * lu.determinant().ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn c9_gp(runs: &mut Runs) -> (Verdict, f64) {
    let (se, t_se) = runs.get("gp-se");
    let (sdof, t_sdof) = runs.get("gp-sdof");
    let secs = t_se + t_sdof;
    let (Ok(se), Ok(sdof)) = (se, sdof) else { return (verdict(false, "harness run failed"), secs) };
    let tr = simulate_with(&OscillatorParams::default(), &ForcingSpec::default_with_seed(0), &SimConfig::default()).unwrap();
    let x: Vec<f64> = tr.t.iter().step_by(12).copied().collect();
    let y: Vec<f64> = tr.u.iter().step_by(12).copied().collect();
    let phys = SdofPhysics { m: 10.0, c: 1.0, k: 15.0 };
    let mut lml_gap = 0.0f64;
    for spec in [
        KernelSpec { kind: KernelKind::Se { l: 0.6, alpha: 0.3 }, noise_var: 1e-3 },
        KernelSpec { kind: KernelKind::Sdof { sigma_f: 0.8, physics: phys }, noise_var: 1e-3 },
    ] {
        let m = fit(&x, &y, &spec, None).unwrap();
        lml_gap = lml_gap.max((m.log_marginal - dense_lml(&x, &y, &spec)).abs());
    }
    let (r_se, r_sdof) = (comp(&se, "u"), comp(&sdof, "u"));
    let (sd_se, sd_sdof) = (extra(&se, "mean_sd"), extra(&sdof, "mean_sd"));
    let cover = extra(&sdof, "coverage_2sd");
    let ok = r_sdof < r_se && sd_sdof < sd_se && cover >= 0.9 && lml_gap < 1e-8 && secs < 30.0;
    let detail = format!(
        "RMSE(u) sdof {r_sdof:.3e} vs se {r_se:.3e}; mean sd sdof {sd_sdof:.3e} vs se {sd_se:.3e}; sdof 2sd coverage {cover:.3}; LML vs dense {lml_gap:.1e}"
    );
    (verdict(ok, detail), secs)
}

fn c10_node(runs: &mut Runs) -> (Verdict, f64) {
    let p = OscillatorParams::default();
    let f = ForcingSpec::default_with_seed(0);
    let h = 1.0 / RATE;
    let z0 = [0.1, 0.2];
    let euler = local_error_ratio(&p, &f, z0, h, IntegratorKind::ExplicitEuler).unwrap();
    let rk4_local = local_error_ratio(&p, &f, z0, h, IntegratorKind::Rk4).unwrap();
    let euler_global = global_error_ratio(&p, &f, z0, h, 16, IntegratorKind::ExplicitEuler).unwrap();
    let rk4 = global_error_ratio(&p, &f, z0, h, 16, IntegratorKind::Rk4).unwrap();
    let (rep, secs) = runs.get("node");
    let orders_ok = (euler - 4.0).abs() < 0.5 && (rk4 - 16.0).abs() < 2.0;
    let mut detail = format!("Euler local {euler:.2} (fixed-horizon {euler_global:.2}), RK4 fixed-horizon {rk4:.2} (local {rk4_local:.1})");
    let ok = match rep {
        Ok(r) => {
            let rel = extra(&r, "relative_rmse_u");
            detail.push_str(&format!("; rollout RMSE(u)/RMS(u) {rel:.4}"));
            orders_ok && rel < 0.1 && secs < 300.0
        }
        Err(e) => {
            detail.push_str(&format!("; {e}"));
            false
        }
    };
    (verdict(ok, detail), secs)
}

fn c11_hamiltonian(runs: &mut Runs) -> (Verdict, f64) {
    let t0 = Instant::now();
    let harmonic = DuffingHamiltonian { k3: 0.0, ..DuffingHamiltonian::from_params(&OscillatorParams::default()) };
    let mut defect = 0.0f64;
    for &(q, p) in &[(0.3, 0.0), (-0.7, 2.5), (0.05, -4.0), (1.0, 1.0)] {
        for h in [1e-3, 1e-2, 0.1] {
            defect = defect.max(symplectic_defect(&step_jacobian(&harmonic, (q, p), h, SymplecticScheme::SymplecticEuler, 1e-3)));
        }
    }
    let (_, se) = integrate(&harmonic, (0.3, 0.0), 1e-3, 100_000, SymplecticScheme::SymplecticEuler);
    let (_, ex) = integrate(&harmonic, (0.3, 0.0), 1e-3, 100_000, SymplecticScheme::Explicit);
    let (d_se, d_ex) = (energy_drift(&se), energy_drift(&ex));
    let local = t0.elapsed().as_secs_f64();
    let (rep, secs) = runs.get("hnn");
    let mut detail = format!("|det J - 1| {defect:.1e}; drift over 1e5 steps symplectic {d_se:.2e} vs explicit {d_ex:.2e}");
    let ok = match rep {
        Ok(r) => {
            let fe = extra(&r, "field_error");
            detail.push_str(&format!("; learned field relative RMSE {fe:.4}"));
            fe < 0.05 && defect < 1e-10 && d_se < 1e-3 && d_ex > 1e-2 && secs + local < 300.0
        }
        Err(e) => {
            detail.push_str(&format!("; {e}"));
            false
        }
    };
    (verdict(ok, detail), secs + local)
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    if let Ok(rd) = fs::read_dir(dir) {
        for e in rd.flatten() {
            let name = e.file_name().to_string_lossy().to_string();
            if name.ends_with(".csv") {
                out.insert(name, fs::read(e.path()).unwrap_or_default());
            }
        }
    }
    out
}

fn c12_determinism(runs: &mut Runs) -> (Verdict, f64) {
    let t0 = Instant::now();
    let mut names: Vec<String> = fs::read_dir(configs_dir())
        .unwrap()
        .flatten()
        .filter_map(|e| e.file_name().to_string_lossy().strip_suffix(".cfg").map(str::to_string))
        .collect();
    names.sort();
    let mut bad = Vec::new();
    let mut files = 0;
    for name in &names {
        let _ = runs.get(name);
        let second = runs.run_into(name, runs.dir(name, "second"));
        let a = csv_files(&runs.dir(name, "first"));
        let b = csv_files(&runs.dir(name, "second"));
        files += a.len();
        if second.is_err() || a.is_empty() || a != b {
            bad.push(name.clone());
        }
    }
    let detail = format!("{} configs, {files} CSV files compared; differing: {bad:?}", names.len());
    (verdict(bad.is_empty() && !names.is_empty(), detail), t0.elapsed().as_secs_f64())
}

fn main() {
    let root = std::env::temp_dir().join(format!("peml-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&root);
    let mut runs = Runs { root: root.clone(), done: BTreeMap::new() };
    let mut results: Vec<(u32, &str, Verdict, f64)> = Vec::new();

    let timed = |f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        (v, t.elapsed().as_secs_f64())
    };

    let (v, s) = timed(&mut c1_simulator);
    let v = Verdict { pass: v.pass && s < 1.0, ..v };
    results.push((1, "simulator fidelity", v, s));
    let (v, s) = timed(&mut c2_autodiff);
    let v = Verdict { pass: v.pass && s < 10.0, ..v };
    results.push((2, "autodiff suite", v, s));
    let (v, s) = c3_filters(&mut runs);
    let v = Verdict { pass: v.pass && s < 30.0, ..v };
    results.push((3, "UKF/PF", v, s));
    let (v, s) = timed(&mut || c4_sindy(&mut runs));
    let s = s + runs.get("sindy").1;
    let v = Verdict { pass: v.pass && s < 1.0, ..v };
    results.push((4, "SINDy recovery", v, s));
    let (v, s) = c5_discovery(&mut runs);
    results.push((5, "PINN equation discovery", v, s));
    let (v, s) = c6_enhanced(&mut runs);
    results.push((6, "PINN enhanced learning", v, s));
    let (v, s) = c7_forward(&mut runs);
    results.push((7, "PINN forward modelling", v, s));
    let (v, s) = c8_pgnn(&mut runs);
    results.push((8, "PGNN", v, s));
    let (v, s) = c9_gp(&mut runs);
    results.push((9, "GP kernels", v, s));
    let (v, s) = c10_node(&mut runs);
    results.push((10, "neural ODE", v, s));
    let (v, s) = c11_hamiltonian(&mut runs);
    results.push((11, "Hamiltonian/symplectic", v, s));
    let (v, s) = c12_determinism(&mut runs);
    results.push((12, "harness determinism", v, s));

    println!();
    let mut unexpected = Vec::new();
    for (n, name, v, s) in &results {
        println!("criterion {n:>2} {name:<26} {} ({s:.2} s): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass && !KNOWN_FAILURES.contains(n) {
            unexpected.push(*n);
        }
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} criteria pass; known failures {KNOWN_FAILURES:?}", results.len());
    let _ = fs::remove_dir_all(&root);
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
