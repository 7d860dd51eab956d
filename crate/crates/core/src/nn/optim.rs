//! First-order (Adam) and quasi-Newton (L-BFGS) minimizers over a flat
//! parameter vector.
//!
//! Objectives are closures returning `(loss, gradient)`. Training runs Adam
//! first and then refines with L-BFGS using a strong-Wolfe line search
//! (cubic interpolation with bracketing and zoom).

use std::collections::VecDeque;

use crate::{Error, Result};

/// Loss and gradient at a parameter vector.
pub trait Objective {
    fn eval(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(theta)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self { cfg, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            theta[i] -= c.lr * mhat / (vhat.sqrt() + c.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsConfig {
    pub max_iter: usize,
    /// Function evaluations allowed; defaults to 1.25·max_iter.
    pub max_eval: Option<usize>,
    pub history: usize,
    pub tol_grad: f64,
    pub tol_change: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_ls: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            max_eval: None,
            history: 50,
            tol_grad: 1e-14,
            tol_change: 1e-18,
            c1: 1e-4,
            c2: 0.9,
            max_ls: 25,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizer of the cubic through (x1, f1, g1) and (x2, f2, g2), clamped to
/// `bounds` (default: the interval spanned by x1, x2).
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, bounds: Option<(f64, f64)>) -> f64 {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    if ![x1, f1, g1, x2, f2, g2].iter().all(|v| v.is_finite()) {
        return 0.5 * (lo + hi);
    }
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if pos.is_finite() {
            return pos.max(lo).min(hi);
        }
    }
    0.5 * (lo + hi)
}

struct LineSearchOutcome {
    f: f64,
    g: Vec<f64>,
    t: f64,
    evals: usize,
}

fn eval_along(obj: &mut dyn Objective, x: &[f64], t: f64, d: &[f64]) -> Result<(f64, Vec<f64>)> {
    let xt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + t * di).collect();
    let (f, g) = obj.eval(&xt)?;
    if f.is_finite() {
        Ok((f, g))
    } else {
        Ok((f64::INFINITY, vec![0.0; x.len()]))
    }
}

#[allow(clippy::too_many_arguments)]
fn strong_wolfe(
    obj: &mut dyn Objective,
    x: &[f64],
    mut t: f64,
    d: &[f64],
    f: f64,
    g: &[f64],
    gtd: f64,
    cfg: &LbfgsConfig,
) -> Result<LineSearchOutcome> {
    let d_norm = max_abs(d);
    let (mut f_new, mut g_new) = eval_along(obj, x, t, d)?;
    let mut evals = 1;
    let mut gtd_new = dot(&g_new, d);
    let (mut t_prev, mut f_prev, mut g_prev, mut gtd_prev) = (0.0, f, g.to_vec(), gtd);
    let mut done = false;
    let mut ls_iter = 0;
    let mut bracket: Vec<f64>;
    let mut bf: Vec<f64>;
    let mut bg: Vec<Vec<f64>>;
    let mut bgtd: Vec<f64>;
    loop {
        if ls_iter >= cfg.max_ls {
            bracket = vec![0.0, t];
            bf = vec![f, f_new];
            bg = vec![g.to_vec(), g_new.clone()];
            bgtd = vec![gtd, gtd_new];
            break;
        }
        if f_new > f + cfg.c1 * t * gtd || (ls_iter > 1 && f_new >= f_prev) {
            bracket = vec![t_prev, t];
            bf = vec![f_prev, f_new];
            bg = vec![g_prev, g_new.clone()];
            bgtd = vec![gtd_prev, gtd_new];
            break;
        }
        if gtd_new.abs() <= -cfg.c2 * gtd {
            bracket = vec![t];
            bf = vec![f_new];
            bg = vec![g_new.clone()];
            bgtd = vec![gtd_new];
            done = true;
            break;
        }
        if gtd_new >= 0.0 {
            bracket = vec![t_prev, t];
            bf = vec![f_prev, f_new];
            bg = vec![g_prev, g_new.clone()];
            bgtd = vec![gtd_prev, gtd_new];
            break;
        }
        let min_step = t + 0.01 * (t - t_prev);
        let max_step = t * 10.0;
        let tmp = t;
        t = cubic_interpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, Some((min_step, max_step)));
        t_prev = tmp;
        f_prev = f_new;
        g_prev = g_new.clone();
        gtd_prev = gtd_new;
        let (fv, gv) = eval_along(obj, x, t, d)?;
        f_new = fv;
        g_new = gv;
        evals += 1;
        gtd_new = dot(&g_new, d);
        ls_iter += 1;
    }

    // zoom
    let mut insuf_progress = false;
    let (mut low, mut high) = if bf[0] <= *bf.last().unwrap() { (0, 1) } else { (1, 0) };
    while !done && ls_iter < cfg.max_ls && bracket.len() == 2 {
        if (bracket[1] - bracket[0]).abs() * d_norm < cfg.tol_change {
            break;
        }
        t = cubic_interpolate(bracket[0], bf[0], bgtd[0], bracket[1], bf[1], bgtd[1], None);
        let bmax = bracket[0].max(bracket[1]);
        let bmin = bracket[0].min(bracket[1]);
        let eps = 0.1 * (bmax - bmin);
        if (bmax - t).min(t - bmin) < eps {
            if insuf_progress || t >= bmax || t <= bmin {
                t = if (t - bmax).abs() < (t - bmin).abs() { bmax - eps } else { bmin + eps };
                insuf_progress = false;
            } else {
                insuf_progress = true;
            }
        } else {
            insuf_progress = false;
        }
        let (fv, gv) = eval_along(obj, x, t, d)?;
        f_new = fv;
        g_new = gv;
        evals += 1;
        gtd_new = dot(&g_new, d);
        ls_iter += 1;
        if f_new > f + cfg.c1 * t * gtd || f_new >= bf[low] {
            bracket[high] = t;
            bf[high] = f_new;
            bg[high] = g_new.clone();
            bgtd[high] = gtd_new;
            (low, high) = if bf[0] <= bf[1] { (0, 1) } else { (1, 0) };
        } else {
            if gtd_new.abs() <= -cfg.c2 * gtd {
                done = true;
            } else if gtd_new * (bracket[high] - bracket[low]) >= 0.0 {
                bracket[high] = bracket[low];
                bf[high] = bf[low];
                bg[high] = bg[low].clone();
                bgtd[high] = bgtd[low];
            }
            bracket[low] = t;
            bf[low] = f_new;
            bg[low] = g_new.clone();
            bgtd[low] = gtd_new;
        }
    }
    let low = if bracket.len() == 1 { 0 } else { low };
    Ok(LineSearchOutcome { f: bf[low], g: bg.swap_remove(low), t: bracket[low], evals })
}

/// L-BFGS from `x`. Returns the final point and the loss after each iteration.
pub fn lbfgs(obj: &mut dyn Objective, mut x: Vec<f64>, cfg: &LbfgsConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let max_eval = cfg.max_eval.unwrap_or(cfg.max_iter * 5 / 4);
    let mut history = Vec::new();
    let (mut f, mut g) = obj.eval(&x)?;
    if !f.is_finite() {
        return Err(Error::TrainingDivergence { iter: 0, history });
    }
    let mut evals = 1;
    if max_abs(&g) <= cfg.tol_grad {
        return Ok((x, history));
    }
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut h_diag = 1.0;
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut t = (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0);
    let mut g_prev = g.clone();
    let mut step: Vec<f64> = Vec::new();
    for iter in 1..=cfg.max_iter {
        if iter > 1 {
            let y: Vec<f64> = g.iter().zip(&g_prev).map(|(a, b)| a - b).collect();
            let ys = dot(&y, &step);
            if ys > 1e-10 {
                if mem.len() == cfg.history {
                    mem.pop_front();
                }
                h_diag = ys / dot(&y, &y);
                mem.push_back((step.clone(), y, 1.0 / ys));
            }
            // two-loop recursion
            let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut alphas = vec![0.0; mem.len()];
            for (i, (s, y, rho)) in mem.iter().enumerate().rev() {
                let a = rho * dot(s, &q);
                alphas[i] = a;
                q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            }
            let mut r: Vec<f64> = q.iter().map(|v| v * h_diag).collect();
            for (i, (s, y, rho)) in mem.iter().enumerate() {
                let b = rho * dot(y, &r);
                r.iter_mut().zip(s).for_each(|(ri, si)| *ri += si * (alphas[i] - b));
            }
            d = r;
            t = 1.0;
        }
        g_prev.clone_from(&g);
        let gtd = dot(&g, &d);
        if gtd > -cfg.tol_change {
            break;
        }
        let ls = strong_wolfe(obj, &x, t, &d, f, &g, gtd, cfg)?;
        t = ls.t;
        evals += ls.evals;
        step = d.iter().map(|v| v * t).collect();
        x.iter_mut().zip(&step).for_each(|(xi, si)| *xi += si);
        let f_old = f;
        f = ls.f;
        g = ls.g;
        if !f.is_finite() {
            return Err(Error::TrainingDivergence { iter, history });
        }
        history.push(f);
        if evals >= max_eval || max_abs(&g) <= cfg.tol_grad || max_abs(&step) <= cfg.tol_change || (f - f_old).abs() < cfg.tol_change {
            break;
        }
    }
    Ok((x, history))
}

/// Adam for `adam_iters` steps, then L-BFGS for up to `lbfgs.max_iter`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub adam_iters: usize,
    pub lbfgs: LbfgsConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), adam_iters: 5000, lbfgs: LbfgsConfig::default() }
    }
}

impl TrainConfig {
    pub fn lbfgs_only(max_iter: usize) -> Self {
        Self { adam_iters: 0, lbfgs: LbfgsConfig { max_iter, ..LbfgsConfig::default() }, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub theta: Vec<f64>,
    /// Loss per iteration: Adam losses (at the pre-step point) then L-BFGS
    /// losses (after each step).
    pub history: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().copied()
    }
}

pub fn train(obj: &mut dyn Objective, theta: Vec<f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.adam_iters == 0 && cfg.lbfgs.max_iter == 0 {
        return Err(Error::InvalidParam("training budget must be at least one iteration".into()));
    }
    let mut theta = theta;
    let mut history = Vec::with_capacity(cfg.adam_iters + cfg.lbfgs.max_iter);
    let mut adam = Adam::new(cfg.adam.clone(), theta.len());
    for iter in 0..cfg.adam_iters {
        let (f, g) = obj.eval(&theta)?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDivergence { iter, history });
        }
        history.push(f);
        adam.step(&mut theta, &g);
    }
    if cfg.lbfgs.max_iter > 0 {
        match lbfgs(obj, theta, &cfg.lbfgs) {
            Ok((x, h)) => {
                theta = x;
                history.extend(h);
            }
            Err(Error::TrainingDivergence { iter, history: h }) => {
                history.extend(h);
                return Err(Error::TrainingDivergence { iter: cfg.adam_iters + iter, history });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainOutcome { theta, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]))
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn adam_quadratic_bowl() {
        let cfg = TrainConfig { adam: AdamConfig { lr: 0.05, ..AdamConfig::default() }, adam_iters: 2000, lbfgs: LbfgsConfig { max_iter: 0, ..LbfgsConfig::default() } };
        let out = train(&mut bowl, vec![0.0], &cfg).unwrap();
        assert!((out.theta[0] - 3.0).abs() < 1e-4);
        assert_eq!(out.history.len(), 2000);
    }

    #[test]
    fn lbfgs_quadratic_bowl() {
        let out = train(&mut bowl, vec![0.0], &TrainConfig::lbfgs_only(50)).unwrap();
        assert!((out.theta[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn lbfgs_rosenbrock() {
        let (x, hist) = lbfgs(&mut rosenbrock, vec![-1.2, 1.0], &LbfgsConfig { max_iter: 200, ..LbfgsConfig::default() }).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x:?}");
        assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn nonfinite_loss_aborts_with_history() {
        let mut calls = 0;
        let mut obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            calls += 1;
            if calls > 3 {
                Ok((f64::NAN, vec![0.0]))
            } else {
                bowl(x)
            }
        };
        let cfg = TrainConfig { adam_iters: 10, ..TrainConfig::default() };
        match train(&mut obj, vec![0.0], &cfg) {
            Err(Error::TrainingDivergence { iter, history }) => {
                assert_eq!(iter, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_history() {
        let cfg = TrainConfig { adam_iters: 20, lbfgs: LbfgsConfig { max_iter: 20, ..LbfgsConfig::default() }, ..TrainConfig::default() };
        let a = train(&mut rosenbrock, vec![0.0, 0.0], &cfg).unwrap();
        let b = train(&mut rosenbrock, vec![0.0, 0.0], &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.theta, b.theta);
    }
}
