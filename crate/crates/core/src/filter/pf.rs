use super::{FilterInit, FilterModel, GaussianBelief, NoiseConfig, StepInput};
use crate::numkit::{cholesky_with_jitter, RngStream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfConfig {
    pub particles: usize,
    /// Resample when ESS drops below this fraction of N.
    pub ess_fraction: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self { particles: 1000, ess_fraction: 0.5 }
    }
}

/// Weighted particles over (u, v, log θ…), stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub particles: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// State drawn from N(z0, z_var), parameters uniform in the init box.
    pub fn from_init(model: &FilterModel, init: &FilterInit, n: usize, rng: &mut RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam("particle filter needs at least one particle".into()));
        }
        let dim = model.dim();
        let mut particles = Vec::with_capacity(n * dim);
        for _ in 0..n {
            particles.push(rng.normal_with(init.z0[0], init.z_var[0].sqrt()));
            particles.push(rng.normal_with(init.z0[1], init.z_var[1].sqrt()));
            for i in 0..3 {
                if model.estimate[i] {
                    let (lo, hi) = init.theta_box[i];
                    particles.push(rng.uniform_in(lo, hi).ln());
                }
            }
        }
        Ok(Self { dim, particles, weights: vec![1.0 / n as f64; n] })
    }

    /// Samples from a Gaussian belief.
    pub fn from_gaussian(belief: &GaussianBelief, n: usize, rng: &mut RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam("particle filter needs at least one particle".into()));
        }
        let dim = belief.mean.len();
        let (chol, _) = cholesky_with_jitter(&belief.cov)?;
        let l = chol.l();
        let mut particles = Vec::with_capacity(n * dim);
        let mut e = vec![0.0; dim];
        for _ in 0..n {
            e.iter_mut().for_each(|x| *x = rng.normal());
            for r in 0..dim {
                let s: f64 = (0..=r).map(|c| l.get(r, c) * e[c]).sum();
                particles.push(belief.mean[r] + s);
            }
        }
        Ok(Self { dim, particles, weights: vec![1.0 / n as f64; n] })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Weighted mean and sd of (u, v, k, c, k3) in raw units.
    pub fn summary(&self, model: &FilterModel) -> ([f64; 5], [f64; 5]) {
        let raw = |x: &[f64]| {
            let th = model.theta(x);
            [x[0], x[1], th[0], th[1], th[2]]
        };
        let mut mean = [0.0; 5];
        for (i, w) in self.weights.iter().enumerate() {
            let r = raw(self.particle(i));
            for j in 0..5 {
                mean[j] += w * r[j];
            }
        }
        let mut var = [0.0; 5];
        for (i, w) in self.weights.iter().enumerate() {
            let r = raw(self.particle(i));
            for j in 0..5 {
                var[j] += w * (r[j] - mean[j]).powi(2);
            }
        }
        (mean, var.map(|v| v.max(0.0).sqrt()))
    }
}

/// Systematic resampling indices for normalized `weights` and offset u0 ∈ [0, 1).
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let u = (u0 + i as f64) / n as f64;
        while u > cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// Bootstrap step: propagate with process noise, weight by the Gaussian
/// acceleration likelihood, resample if the ESS falls too low. Returns
/// whether resampling happened.
pub fn pf_step(
    ens: &mut ParticleEnsemble,
    model: &FilterModel,
    input: &StepInput,
    noise: &NoiseConfig,
    cfg: &PfConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    let dim = ens.dim;
    let (sv, st) = (noise.q_v.sqrt(), noise.q_theta.sqrt());
    let mut logw = Vec::with_capacity(ens.len());
    for i in 0..ens.len() {
        let x = &mut ens.particles[i * dim..(i + 1) * dim];
        let z = model.propagate(x, input.f_prev, input.f);
        x[0] = z[0];
        x[1] = z[1] + sv * rng.normal();
        for v in x[2..].iter_mut() {
            *v += st * rng.normal();
        }
        let resid = input.y - model.measure(x, input.f);
        let ll = if noise.r > 0.0 {
            -0.5 * resid * resid / noise.r
        } else if resid == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        logw.push(ens.weights[i].ln() + ll);
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate { step: input.index });
    }
    let mut total = 0.0;
    for (w, lw) in ens.weights.iter_mut().zip(&logw) {
        *w = (lw - max).exp();
        total += *w;
    }
    ens.weights.iter_mut().for_each(|w| *w /= total);
    if ens.ess() < cfg.ess_fraction * ens.len() as f64 {
        let idx = systematic_resample(&ens.weights, rng.uniform());
        let old = std::mem::take(&mut ens.particles);
        ens.particles = idx.iter().flat_map(|&j| old[j * dim..(j + 1) * dim].iter().copied()).collect();
        let n = ens.len();
        ens.weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
        return Ok(true);
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::OscillatorParams;

    #[test]
    fn init_inside_box() {
        let model = FilterModel::joint(10.0, 0.1);
        let init = FilterInit::default();
        let ens = ParticleEnsemble::from_init(&model, &init, 1000, &mut RngStream::new(3)).unwrap();
        for i in 0..ens.len() {
            let th = model.theta(ens.particle(i));
            for j in 0..3 {
                assert!(th[j] >= init.theta_box[j].0 && th[j] <= init.theta_box[j].1);
            }
        }
        assert!((ens.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_particle_at_truth_keeps_weight() {
        let p = OscillatorParams::default();
        let model = FilterModel::joint(p.m, 0.1);
        let x = vec![0.02, 0.01, p.k.ln(), p.c.ln(), p.k3.ln()];
        let z = model.propagate(&x, 0.5, 0.4);
        let y = model.measure(&[z[0], z[1], x[2], x[3], x[4]], 0.4);
        let mut ens = ParticleEnsemble { dim: 5, particles: x, weights: vec![1.0] };
        let noise = NoiseConfig { q_v: 0.0, q_theta: 0.0, r: 0.0 };
        pf_step(&mut ens, &model, &StepInput { index: 1, f_prev: 0.5, f: 0.4, y }, &noise, &PfConfig::default(), &mut RngStream::new(0)).unwrap();
        assert_eq!(ens.weights, vec![1.0]);
    }

    #[test]
    fn systematic_resampling_counts() {
        let idx = systematic_resample(&[0.5, 0.25, 0.25, 0.0], 0.5);
        assert_eq!(idx, vec![0, 0, 1, 2]);
    }

    #[test]
    fn all_zero_weights_is_degenerate() {
        let p = OscillatorParams::default();
        let model = FilterModel::joint(p.m, 0.1);
        let mut ens = ParticleEnsemble { dim: 5, particles: vec![0.0, 0.0, p.k.ln(), p.c.ln(), p.k3.ln()], weights: vec![1.0] };
        let noise = NoiseConfig { q_v: 0.0, q_theta: 0.0, r: 0.0 };
        let err = pf_step(&mut ens, &model, &StepInput { index: 7, f_prev: 0.0, f: 0.0, y: 1.0 }, &noise, &PfConfig::default(), &mut RngStream::new(0));
        assert!(matches!(err, Err(Error::Degenerate { step: 7 })));
    }
}
