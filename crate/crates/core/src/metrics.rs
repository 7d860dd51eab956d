//! Error measures used by every experiment report.

pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "rmse: length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (s / pred.len() as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// RMSE² / Var(truth).
pub fn nmse(pred: &[f64], truth: &[f64]) -> f64 {
    let r = rmse(pred, truth);
    r * r / variance(truth)
}

pub fn percent_error(estimate: f64, truth: f64) -> f64 {
    100.0 * (estimate - truth).abs() / truth.abs()
}

/// Fraction of `truth` inside mean ± z·sd.
pub fn coverage(mean: &[f64], sd: &[f64], truth: &[f64], z: f64) -> f64 {
    assert!(mean.len() == sd.len() && sd.len() == truth.len());
    if truth.is_empty() {
        return 0.0;
    }
    let inside = mean.iter().zip(sd).zip(truth).filter(|((m, s), t)| (*t - *m).abs() <= z * *s).count();
    inside as f64 / truth.len() as f64
}
