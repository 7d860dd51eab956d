//! First coordinate of the base-2 Sobol sequence.
//!
//! Dimension 1 has direction numbers v_j = 2^(-j), so the sequence is the van
//! der Corput sequence visited in Gray-code order: 0, 1/2, 3/4, 1/4, 3/8, ...
//! This matches an unscrambled `scipy.stats.qmc.Sobol(d=1)`.

const BITS: u32 = 52;

/// First `n` points of the sequence on [0, 1).
pub fn sobol_unit(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut x: u64 = 0;
    let scale = (1u64 << BITS) as f64;
    for i in 0..n {
        if i > 0 {
            // index of the lowest zero bit of i-1
            let c = (!(i as u64 - 1)).trailing_zeros();
            assert!(c < BITS, "sobol_unit: more than 2^{BITS} points requested");
            x ^= 1u64 << (BITS - 1 - c);
        }
        out.push(x as f64 / scale);
    }
    out
}

/// First `n` points mapped affinely onto `[lo, hi]`.
pub fn sobol_sample(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(n >= 1, "sobol_sample: n must be at least 1");
    assert!(hi > lo, "sobol_sample: degenerate domain [{lo}, {hi}]");
    sobol_unit(n).into_iter().map(|x| lo + (hi - lo) * x).collect()
}

/// Maps the first `n` points onto indices of a grid of `len` samples by
/// `floor(x * len)`. Indices come back in sequence order; they are distinct
/// whenever `n ≤ len` and both are powers of two, and otherwise collisions
/// are skipped in favour of later sequence points.
pub fn sobol_indices(n: usize, len: usize) -> Vec<usize> {
    assert!(n <= len, "sobol_indices: {n} points from a grid of {len}");
    let mut seen = vec![false; len];
    let mut out = Vec::with_capacity(n);
    let mut m = n;
    while out.len() < n {
        out.clear();
        seen.iter_mut().for_each(|s| *s = false);
        for x in sobol_unit(m) {
            let idx = ((x * len as f64) as usize).min(len - 1);
            if !seen[idx] {
                seen[idx] = true;
                out.push(idx);
                if out.len() == n {
                    break;
                }
            }
        }
        m *= 2;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_point_is_zero() {
        assert_eq!(sobol_sample(1, 0.0, 1.0), vec![0.0]);
    }

    #[test]
    fn reference_table() {
        // scipy.stats.qmc.Sobol(d=1, scramble=False).random(8)
        let reference = [0.0, 0.5, 0.75, 0.25, 0.375, 0.875, 0.625, 0.125];
        assert_eq!(sobol_unit(8), reference);
    }

    #[test]
    fn points_on_time_domain_are_distinct() {
        let pts = sobol_sample(256, 0.0, 120.0);
        assert!(pts.iter().all(|p| (0.0..=120.0).contains(p)));
        let mut sorted = pts.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        assert_eq!(sorted.len(), 256);
    }

    #[test]
    fn grid_indices_distinct() {
        let idx = sobol_indices(256, 1024);
        let mut s = idx.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 256);
        let odd = sobol_indices(100, 1000);
        let mut s = odd.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 100);
    }
}
