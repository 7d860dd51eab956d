//! Ground-truth Duffing oscillator: m·ü + c·u̇ + k·u + k3·u³ = f.
//!
//! State-space form ż = A·z + A_n·u³ + B·f with z = (u, u̇). Integration is
//! classical RK4 with the forcing evaluated analytically at the stage times.
//! Each output sample interval is split into `substeps` RK4 steps.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use crate::io::{read_columns, write_columns};
use crate::numkit::{sobol_indices, RngStream};
use crate::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 1024;
pub const DEFAULT_RATE: f64 = 8.525;
pub const DEFAULT_SUBSTEPS: usize = 8;
pub const DEFAULT_FREQUENCIES: [f64; 4] = [0.7, 0.85, 1.6, 1.8];
pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "u", "v", "a", "f"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorParams {
    pub m: f64,
    pub c: f64,
    pub k: f64,
    pub k3: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self { m: 10.0, c: 1.0, k: 15.0, k3: 100.0 }
    }
}

/// A = [[0, 1], [−k/m, −c/m]], A_n = [0, −k3/m]ᵀ, B = [0, 1/m]ᵀ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateMatrices {
    pub a: [[f64; 2]; 2],
    pub a_n: [f64; 2],
    pub b: [f64; 2],
}

impl OscillatorParams {
    pub fn new(m: f64, c: f64, k: f64, k3: f64) -> Result<Self> {
        let p = Self { m, c, k, k3 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::InvalidParam(format!("mass must be positive, got {}", self.m)));
        }
        if !(self.k >= 0.0) || !(self.c >= 0.0) || !self.k3.is_finite() {
            return Err(Error::InvalidParam(format!("need k >= 0, c >= 0, finite k3; got k={}, c={}, k3={}", self.k, self.c, self.k3)));
        }
        Ok(())
    }

    /// Same system with the cubic term removed.
    pub fn linear(&self) -> Self {
        Self { k3: 0.0, ..*self }
    }

    /// Same system without damping.
    pub fn undamped(&self) -> Self {
        Self { c: 0.0, ..*self }
    }

    pub fn matrices(&self) -> StateMatrices {
        StateMatrices {
            a: [[0.0, 1.0], [-self.k / self.m, -self.c / self.m]],
            a_n: [0.0, -self.k3 / self.m],
            b: [0.0, 1.0 / self.m],
        }
    }

    pub fn acceleration(&self, u: f64, v: f64, f: f64) -> f64 {
        (f - self.c * v - self.k * u - self.k3 * u * u * u) / self.m
    }

    pub fn rhs(&self, z: [f64; 2], f: f64) -> [f64; 2] {
        [z[1], self.acceleration(z[0], z[1], f)]
    }

    /// H = ½mv² + ½ku² + ¼k3u⁴.
    pub fn energy(&self, u: f64, v: f64) -> f64 {
        0.5 * self.m * v * v + 0.5 * self.k * u * u + 0.25 * self.k3 * u.powi(4)
    }

    pub fn natural_frequency(&self) -> f64 {
        (self.k / self.m).sqrt()
    }

    pub fn damping_ratio(&self) -> f64 {
        self.c / (2.0 * (self.k * self.m).sqrt())
    }
}

/// Random-phase multisine f(t) = Σ Aᵢ·sin(ωᵢt + φᵢ).
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingSpec {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub phase_seed: u64,
}

impl ForcingSpec {
    /// Phases drawn uniformly on [0, 2π) from the `forcing-phase` substream of
    /// `phase_seed`.
    pub fn multisine(frequencies: &[f64], amplitude: f64, phase_seed: u64) -> Result<Self> {
        if frequencies.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParam(format!("frequencies must be positive: {frequencies:?}")));
        }
        let mut rng = RngStream::new(phase_seed).substream("forcing-phase");
        let phases = frequencies.iter().map(|_| rng.uniform_in(0.0, TAU)).collect();
        Ok(Self {
            frequencies: frequencies.to_vec(),
            amplitudes: vec![amplitude; frequencies.len()],
            phases,
            phase_seed,
        })
    }

    pub fn default_with_seed(phase_seed: u64) -> Self {
        Self::multisine(&DEFAULT_FREQUENCIES, 1.0, phase_seed).expect("default frequencies are positive")
    }

    /// Explicit components; used for superposition checks and hand-built cases.
    pub fn from_components(frequencies: Vec<f64>, amplitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        if frequencies.len() != amplitudes.len() || frequencies.len() != phases.len() {
            return Err(Error::InvalidParam("forcing component lists differ in length".into()));
        }
        if frequencies.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParam(format!("frequencies must be positive: {frequencies:?}")));
        }
        Ok(Self { frequencies, amplitudes, phases, phase_seed: 0 })
    }

    pub fn zero() -> Self {
        Self { frequencies: Vec::new(), amplitudes: Vec::new(), phases: Vec::new(), phase_seed: 0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.amplitudes)
            .zip(&self.phases)
            .map(|((w, a), p)| a * (w * t + p).sin())
            .sum()
    }

    /// Component-wise sum of two forcings.
    pub fn superpose(&self, other: &Self) -> Self {
        let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
        Self {
            frequencies: cat(&self.frequencies, &other.frequencies),
            amplitudes: cat(&self.amplitudes, &other.amplitudes),
            phases: cat(&self.phases, &other.phases),
            phase_seed: self.phase_seed,
        }
    }
}

/// One classical RK4 step of length `h` from time `t`.
pub fn rk4_step(p: &OscillatorParams, force: impl Fn(f64) -> f64, t: f64, z: [f64; 2], h: f64) -> [f64; 2] {
    let f0 = force(t);
    let fm = force(t + 0.5 * h);
    let f1 = force(t + h);
    rk4_increment(p, z, f0, fm, f1, h)
}

/// RK4 with the forcing supplied at the start, midpoint and end of the step.
pub fn rk4_increment(p: &OscillatorParams, z: [f64; 2], f0: f64, fm: f64, f1: f64, h: f64) -> [f64; 2] {
    let k1 = p.rhs(z, f0);
    let k2 = p.rhs([z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]], fm);
    let k3 = p.rhs([z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]], fm);
    let k4 = p.rhs([z[0] + h * k3[0], z[1] + h * k3[1]], f1);
    [
        z[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        z[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub rate: f64,
    pub substeps: usize,
    pub z0: [f64; 2],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { n: DEFAULT_SAMPLES, rate: DEFAULT_RATE, substeps: DEFAULT_SUBSTEPS, z0: [0.0, 0.0] }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub f: Vec<f64>,
}

/// Simulates `n` samples at `rate` Hz from `z0` with the default substep count.
pub fn simulate(params: &OscillatorParams, forcing: &ForcingSpec, n: usize, rate: f64, z0: [f64; 2]) -> Result<Trajectory> {
    simulate_with(params, forcing, &SimConfig { n, rate, substeps: DEFAULT_SUBSTEPS, z0 })
}

pub fn simulate_with(params: &OscillatorParams, forcing: &ForcingSpec, cfg: &SimConfig) -> Result<Trajectory> {
    params.validate()?;
    if !(cfg.rate > 0.0) || cfg.n < 2 || cfg.substeps == 0 {
        return Err(Error::InvalidParam(format!("need rate > 0, n >= 2, substeps >= 1; got {cfg:?}")));
    }
    let dt = 1.0 / cfg.rate;
    let h = dt / cfg.substeps as f64;
    let mut traj = Trajectory::with_capacity(cfg.n);
    let mut z = cfg.z0;
    for i in 0..cfg.n {
        let t = i as f64 * dt;
        if i > 0 {
            let t_prev = (i - 1) as f64 * dt;
            for s in 0..cfg.substeps {
                z = rk4_step(params, |tt| forcing.eval(tt), t_prev + s as f64 * h, z, h);
            }
            if !z[0].is_finite() || !z[1].is_finite() {
                return Err(Error::Divergence { step: i });
            }
        }
        let f = forcing.eval(t);
        traj.push(t, z[0], z[1], params.acceleration(z[0], z[1], f), f);
    }
    Ok(traj)
}

impl Trajectory {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            f: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, t: f64, u: f64, v: f64, a: f64, f: f64) {
        self.t.push(t);
        self.u.push(u);
        self.v.push(v);
        self.a.push(a);
        self.f.push(f);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.t.first(), self.t.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Rows at the given indices.
    pub fn select(&self, idx: &[usize]) -> Self {
        let pick = |x: &[f64]| idx.iter().map(|&i| x[i]).collect::<Vec<_>>();
        Self { t: pick(&self.t), u: pick(&self.u), v: pick(&self.v), a: pick(&self.a), f: pick(&self.f) }
    }

    pub fn state(&self, i: usize) -> [f64; 2] {
        [self.u[i], self.v[i]]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_columns(w, &TRAJECTORY_HEADER, &[&self.t, &self.u, &self.v, &self.a, &self.f])
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut cols = read_columns(r, &TRAJECTORY_HEADER)?.into_iter();
        let mut next = || cols.next().unwrap_or_default();
        let traj = Self { t: next(), u: next(), v: next(), a: next(), f: next() };
        if traj.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("trajectory times must be strictly increasing".into()));
        }
        Ok(traj)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// signal + ε with ε ~ N(0, (ratio·RMS(signal))²), drawn from `rng`.
pub fn add_noise(signal: &[f64], ratio: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(ratio >= 0.0) {
        return Err(Error::InvalidParam(format!("noise ratio must be nonnegative, got {ratio}")));
    }
    let sd = ratio * rms(signal);
    if sd == 0.0 {
        return Ok(signal.to_vec());
    }
    Ok(signal.iter().map(|s| s + sd * rng.normal()).collect())
}

/// Observation, collocation and boundary sets as indices into one time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub times: Vec<f64>,
    pub observation: Vec<usize>,
    pub collocation: Vec<usize>,
    pub boundary: Vec<usize>,
}

impl DomainSpec {
    /// Ω_c = the whole grid, Ω_o = `observation`, ∂Ω = {t = t₀}.
    pub fn on_grid(times: &[f64], observation: Vec<usize>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptySelection("empty time grid".into()));
        }
        if let Some(bad) = observation.iter().find(|&&i| i >= times.len()) {
            return Err(Error::InvalidParam(format!("observation index {bad} outside grid of {}", times.len())));
        }
        Ok(Self { times: times.to_vec(), observation, collocation: (0..times.len()).collect(), boundary: vec![0] })
    }

    pub fn observation_times(&self) -> Vec<f64> {
        self.observation.iter().map(|&i| self.times[i]).collect()
    }

    pub fn collocation_times(&self) -> Vec<f64> {
        self.collocation.iter().map(|&i| self.times[i]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Every `k`-th sample starting at index 0.
    Stride(usize),
    /// `n` grid indices picked by the 1-D Sobol sequence.
    Sobol(usize),
}

pub fn subsample(traj: &Trajectory, selection: Selection) -> Result<(DomainSpec, Trajectory)> {
    let idx: Vec<usize> = match selection {
        Selection::Stride(0) => return Err(Error::InvalidParam("stride must be at least 1".into())),
        Selection::Stride(k) => (0..traj.len()).step_by(k).collect(),
        Selection::Sobol(n) if n > traj.len() => {
            return Err(Error::InvalidParam(format!("{n} Sobol points from {} samples", traj.len())))
        }
        Selection::Sobol(n) => sobol_indices(n, traj.len()),
    };
    if idx.is_empty() {
        return Err(Error::EmptySelection(format!("{selection:?} selects nothing from {} samples", traj.len())));
    }
    let obs = traj.select(&idx);
    Ok((DomainSpec::on_grid(&traj.t, idx)?, obs))
}
