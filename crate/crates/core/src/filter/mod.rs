//! Joint state-parameter estimation from noisy acceleration records.
//!
//! The augmented state is (u, v, log θ…) where θ is the estimated subset of
//! (k, c, k3), each following a random walk in log space. The measurement is
//! the model acceleration h(z, θ, f) = (f − c·v − k·u − k3·u³)/m.

mod pf;
mod ukf;

pub use pf::{pf_step, systematic_resample, ParticleEnsemble, PfConfig};
pub use ukf::{sigma_weights, ukf_step, GaussianBelief, UkfConfig, UkfWeights};

use crate::numkit::RngStream;
use crate::sim::{rk4_increment, OscillatorParams, Trajectory};
use crate::{Error, Result};

pub const FILTER_HEADER: [&str; 11] = ["t", "u_hat", "v_hat", "k_hat", "c_hat", "k3_hat", "sd_u", "sd_v", "sd_k", "sd_c", "sd_k3"];

/// Names of the (k, c, k3) slots.
pub const THETA_NAMES: [&str; 3] = ["k", "c", "k3"];

/// Process and measurement noise. `q_theta` acts on log parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub q_v: f64,
    pub q_theta: f64,
    pub r: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { q_v: 1e-18, q_theta: 1e-18, r: 1e-18 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("q_v", self.q_v), ("q_theta", self.q_theta), ("r", self.r)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("noise variance {name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Measurement variance assumed by the filters: the injected noise level
/// `ratio`·RMS(a), widened by `inflation` in standard-deviation terms.
pub fn assumed_measurement_variance(clean: &[f64], ratio: f64, inflation: f64) -> f64 {
    (inflation * ratio * crate::sim::rms(clean)).powi(2)
}

/// Known mass, the (k, c, k3) values used when a slot is not estimated, and
/// which slots are estimated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterModel {
    pub m: f64,
    pub fixed: [f64; 3],
    pub estimate: [bool; 3],
    pub h: f64,
}

impl FilterModel {
    pub fn joint(m: f64, h: f64) -> Self {
        Self { m, fixed: [0.0; 3], estimate: [true; 3], h }
    }

    /// State-only filter for the linear oscillator with known (k, c).
    pub fn linear_known(p: &OscillatorParams, h: f64) -> Self {
        Self { m: p.m, fixed: [p.k, p.c, 0.0], estimate: [false; 3], h }
    }

    pub fn n_theta(&self) -> usize {
        self.estimate.iter().filter(|e| **e).count()
    }

    pub fn dim(&self) -> usize {
        2 + self.n_theta()
    }

    /// (k, c, k3) from the augmented state `x` (log parameters after u, v).
    pub fn theta(&self, x: &[f64]) -> [f64; 3] {
        let mut j = 2;
        let mut out = self.fixed;
        for (i, e) in self.estimate.iter().enumerate() {
            if *e {
                out[i] = x[j].exp();
                j += 1;
            }
        }
        out
    }

    pub fn params(&self, x: &[f64]) -> OscillatorParams {
        let [k, c, k3] = self.theta(x);
        OscillatorParams { m: self.m, c, k, k3 }
    }

    /// One RK4 step of the state part with linearly interpolated forcing.
    pub fn propagate(&self, x: &[f64], f0: f64, f1: f64) -> [f64; 2] {
        rk4_increment(&self.params(x), [x[0], x[1]], f0, 0.5 * (f0 + f1), f1, self.h)
    }

    pub fn measure(&self, x: &[f64], f: f64) -> f64 {
        self.params(x).acceleration(x[0], x[1], f)
    }
}

/// Initial belief: state mean and variance, prior guesses for (k, c, k3)
/// with raw-unit variances, and the PF sampling box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterInit {
    pub z0: [f64; 2],
    pub z_var: [f64; 2],
    pub theta0: [f64; 3],
    pub theta_var: [f64; 3],
    pub theta_box: [(f64, f64); 3],
}

impl Default for FilterInit {
    fn default() -> Self {
        Self {
            z0: [0.0, 0.0],
            z_var: [1e-2, 1e-2],
            theta0: [1.0, 0.5, 40.0],
            theta_var: [25.0, 0.25, 900.0],
            theta_box: [(5.0, 20.0), (0.5, 2.0), (50.0, 160.0)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    Ukf,
    Pf,
}

/// Per-step estimates in raw units: (u, v, k, c, k3) and their standard
/// deviations. Unestimated parameters report their fixed value with sd 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterResult {
    pub t: Vec<f64>,
    pub mean: Vec<[f64; 5]>,
    pub sd: Vec<[f64; 5]>,
    pub ess: Vec<f64>,
    pub resamples: usize,
}

impl FilterResult {
    pub fn final_theta(&self) -> Option<[f64; 3]> {
        self.mean.last().map(|m| [m[2], m[3], m[4]])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let col = |src: &Vec<[f64; 5]>, j: usize| src.iter().map(|r| r[j]).collect::<Vec<_>>();
        let cols: Vec<Vec<f64>> =
            std::iter::once(self.t.clone()).chain((0..5).map(|j| col(&self.mean, j))).chain((0..5).map(|j| col(&self.sd, j))).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        crate::io::write_columns(w, &FILTER_HEADER, &refs)
    }
}

/// Forcing over one step, the measurement at its end, and its index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInput {
    pub index: usize,
    pub f_prev: f64,
    pub f: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterSetup {
    pub model: FilterModel,
    pub init: FilterInit,
    pub noise: NoiseConfig,
    pub ukf: UkfConfig,
    pub pf: PfConfig,
}

/// Runs the chosen filter over `y` (measured accelerations on `traj.t` with
/// forcing `traj.f`). Step 0 reports the prior; updates start at step 1.
pub fn run_filter(kind: FilterKind, traj: &Trajectory, y: &[f64], setup: &FilterSetup, rng: &mut RngStream) -> Result<FilterResult> {
    let FilterSetup { model, init, noise, ukf, pf } = setup;
    noise.validate()?;
    if y.len() != traj.len() {
        return Err(Error::InvalidParam(format!("{} measurements for a trajectory of {}", y.len(), traj.len())));
    }
    let mut out = FilterResult::default();
    if traj.len() == 0 {
        return Ok(out);
    }
    let input = |i: usize| StepInput { index: i, f_prev: traj.f[i - 1], f: traj.f[i], y: y[i] };
    match kind {
        FilterKind::Ukf => {
            let mut belief = GaussianBelief::from_init(model, init);
            out.push(traj.t[0], belief.summary(model), f64::NAN);
            for i in 1..traj.len() {
                belief = ukf_step(&belief, model, &input(i), noise, ukf)?;
                out.push(traj.t[i], belief.summary(model), f64::NAN);
            }
        }
        FilterKind::Pf => {
            let mut ens = ParticleEnsemble::from_init(model, init, pf.particles, rng)?;
            out.push(traj.t[0], ens.summary(model), ens.ess());
            for i in 1..traj.len() {
                if pf_step(&mut ens, model, &input(i), noise, pf, rng)? {
                    out.resamples += 1;
                }
                out.push(traj.t[i], ens.summary(model), ens.ess());
            }
        }
    }
    Ok(out)
}

impl FilterResult {
    fn push(&mut self, t: f64, (mean, sd): ([f64; 5], [f64; 5]), ess: f64) {
        self.t.push(t);
        self.mean.push(mean);
        self.sd.push(sd);
        self.ess.push(ess);
    }
}
