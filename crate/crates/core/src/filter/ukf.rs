use super::{FilterInit, FilterModel, NoiseConfig, StepInput};
use crate::numkit::{cholesky_with_jitter, DenseMatrix};
use crate::{Error, Result};

/// Unscented-transform scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self { alpha: 1e-3, beta: 2.0, kappa: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UkfWeights {
    pub lambda: f64,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

/// Merwe weights for an `na`-dimensional augmented state (2·na + 1 points).
pub fn sigma_weights(na: usize, cfg: &UkfConfig) -> UkfWeights {
    let n = na as f64;
    let lambda = cfg.alpha * cfg.alpha * (n + cfg.kappa) - n;
    let w = 1.0 / (2.0 * (n + lambda));
    let mut wm = vec![w; 2 * na + 1];
    let mut wc = wm.clone();
    wm[0] = lambda / (n + lambda);
    wc[0] = wm[0] + 1.0 - cfg.alpha * cfg.alpha + cfg.beta;
    UkfWeights { lambda, wm, wc }
}

/// Mean and covariance over (u, v, log θ…).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    pub cov: DenseMatrix,
}

impl GaussianBelief {
    /// Raw-unit parameter variances map to log space by matching the first
    /// two moments of a lognormal centred on θ0: ln(1 + var/θ0²).
    pub fn from_init(model: &FilterModel, init: &FilterInit) -> Self {
        let mut mean = init.z0.to_vec();
        let mut var = init.z_var.to_vec();
        for i in 0..3 {
            if model.estimate[i] {
                mean.push(init.theta0[i].ln());
                var.push((init.theta_var[i] / (init.theta0[i] * init.theta0[i])).ln_1p());
            }
        }
        Self { mean, cov: DenseMatrix::from_diag(&var) }
    }

    /// Raw-unit means and standard deviations of (u, v, k, c, k3); parameter
    /// spreads use the first-order map sd_θ ≈ θ·sd_logθ.
    pub fn summary(&self, model: &FilterModel) -> ([f64; 5], [f64; 5]) {
        let theta = model.theta(&self.mean);
        let mean = [self.mean[0], self.mean[1], theta[0], theta[1], theta[2]];
        let sd_of = |i: usize| self.cov.get(i, i).max(0.0).sqrt();
        let mut sd = [sd_of(0), sd_of(1), 0.0, 0.0, 0.0];
        let mut j = 2;
        for i in 0..3 {
            if model.estimate[i] {
                sd[2 + i] = theta[i] * sd_of(j);
                j += 1;
            }
        }
        (mean, sd)
    }
}

/// One predict/update cycle with the state augmented by process-noise
/// dimensions on v and on every estimated log parameter. Measurement noise
/// enters additively.
pub fn ukf_step(belief: &GaussianBelief, model: &FilterModel, input: &StepInput, noise: &NoiseConfig, cfg: &UkfConfig) -> Result<GaussianBelief> {
    let n = model.dim();
    let p = model.n_theta();
    let na = n + 1 + p;
    let w = sigma_weights(na, cfg);
    let mut pa = DenseMatrix::zeros(na, na);
    for i in 0..n {
        for j in 0..n {
            pa.set(i, j, belief.cov.get(i, j));
        }
    }
    pa.set(n, n, noise.q_v);
    for j in 0..p {
        pa.set(n + 1 + j, n + 1 + j, noise.q_theta);
    }
    let scaled = pa.scale(na as f64 + w.lambda);
    let (chol, _) = cholesky_with_jitter(&scaled)
        .map_err(|e| Error::FilterDivergence { step: input.index, reason: format!("sigma-point factorization: {e}") })?;
    let l = chol.l();

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(2 * na + 1);
    let mut ys: Vec<f64> = Vec::with_capacity(2 * na + 1);
    let mut point = vec![0.0; na];
    for s in 0..2 * na + 1 {
        point[..n].copy_from_slice(&belief.mean);
        point[n..].iter_mut().for_each(|x| *x = 0.0);
        if s > 0 {
            let (col, sign) = if s <= na { (s - 1, 1.0) } else { (s - 1 - na, -1.0) };
            for r in 0..na {
                point[r] += sign * l.get(r, col);
            }
        }
        let z = model.propagate(&point, input.f_prev, input.f);
        let mut x = point[..n].to_vec();
        x[0] = z[0];
        x[1] = z[1] + point[n];
        for j in 0..p {
            x[2 + j] += point[n + 1 + j];
        }
        ys.push(model.measure(&x, input.f));
        xs.push(x);
    }

    let mut xm = vec![0.0; n];
    let mut ym = 0.0;
    for (s, x) in xs.iter().enumerate() {
        for i in 0..n {
            xm[i] += w.wm[s] * x[i];
        }
        ym += w.wm[s] * ys[s];
    }
    let mut pxx = DenseMatrix::zeros(n, n);
    let mut pxy = vec![0.0; n];
    let mut pyy = noise.r;
    for (s, x) in xs.iter().enumerate() {
        let dy = ys[s] - ym;
        pyy += w.wc[s] * dy * dy;
        for i in 0..n {
            let di = x[i] - xm[i];
            pxy[i] += w.wc[s] * di * dy;
            for j in 0..n {
                let v = pxx.get(i, j) + w.wc[s] * di * (x[j] - xm[j]);
                pxx.set(i, j, v);
            }
        }
    }
    if !(pyy > 0.0) || !pyy.is_finite() {
        return Err(Error::FilterDivergence { step: input.index, reason: format!("innovation variance {pyy}") });
    }
    let gain: Vec<f64> = pxy.iter().map(|c| c / pyy).collect();
    let innov = input.y - ym;
    let mean: Vec<f64> = xm.iter().zip(&gain).map(|(m, g)| m + g * innov).collect();
    let mut cov = pxx;
    for i in 0..n {
        for j in 0..n {
            cov.set(i, j, cov.get(i, j) - gain[i] * gain[j] * pyy);
        }
    }
    cov.symmetrize();
    if !cov.is_finite() || mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::FilterDivergence { step: input.index, reason: "non-finite posterior".into() });
    }
    Ok(GaussianBelief { mean, cov })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for na in [3, 7, 9] {
            let w = sigma_weights(na, &UkfConfig::default());
            assert_eq!(w.wm.len(), 2 * na + 1);
            assert!((w.wm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn default_layout_has_nineteen_points() {
        let model = FilterModel::joint(10.0, 1.0 / 8.525);
        let na = model.dim() + 1 + model.n_theta();
        assert_eq!(2 * na + 1, 19);
    }

    #[test]
    fn belief_at_truth_stays_put_on_clean_data() {
        let p = crate::sim::OscillatorParams::default();
        let model = FilterModel::joint(p.m, 1.0 / 8.525);
        let z = [0.01, -0.02];
        let (f0, f1) = (0.3, -0.1);
        let truth = vec![z[0], z[1], p.k.ln(), p.c.ln(), p.k3.ln()];
        let z1 = model.propagate(&truth, f0, f1);
        let next = vec![z1[0], z1[1], truth[2], truth[3], truth[4]];
        let y = model.measure(&next, f1);
        let belief = GaussianBelief { mean: truth, cov: DenseMatrix::identity(5).scale(1e-14) };
        let noise = NoiseConfig { r: 1e-6, ..NoiseConfig::default() };
        let out = ukf_step(&belief, &model, &StepInput { index: 1, f_prev: f0, f: f1, y }, &noise, &UkfConfig::default()).unwrap();
        for (a, b) in out.mean.iter().zip(&next) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(out.cov.asymmetry() < 1e-12);
    }
}
