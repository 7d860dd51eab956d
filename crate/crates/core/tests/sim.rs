use peml_core::numkit::RngStream;
use peml_core::sim::*;
use proptest::prelude::*;
use std::f64::consts::PI;

/// Classical RK4 on the linear oscillator with its own stepping loop.
fn linear_oracle(p: &OscillatorParams, f: &ForcingSpec, n: usize, rate: f64, refine: usize) -> Vec<f64> {
    let h = 1.0 / (rate * refine as f64);
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

#[test]
fn linear_case_matches_fine_step_oracle() {
    let p = OscillatorParams::default().linear();
    let f = ForcingSpec::default_with_seed(0);
    let tr = simulate_with(&p, &f, &SimConfig::default()).unwrap();
    let oracle = linear_oracle(&p, &f, tr.len(), DEFAULT_RATE, 100 * DEFAULT_SUBSTEPS);
    let err = peml_core::metrics::rmse(&tr.u, &oracle) / rms(&oracle);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn unforced_undamped_energy_is_conserved() {
    let p = OscillatorParams { c: 0.0, ..OscillatorParams::default() };
    let tr = simulate_with(&p, &ForcingSpec::zero(), &SimConfig { z0: [0.3, 0.0], ..SimConfig::default() }).unwrap();
    let e0 = p.energy(tr.u[0], tr.v[0]);
    let drift = (0..tr.len()).map(|i| (p.energy(tr.u[i], tr.v[i]) - e0).abs() / e0).fold(0.0, f64::max);
    assert!(drift < 1e-6, "{drift}");
}

#[test]
fn forcing_spectrum_peaks_at_the_default_lines() {
    let f = ForcingSpec::default_with_seed(0);
    let n = 1024;
    let dt = 1.0 / DEFAULT_RATE;
    let x: Vec<f64> = (0..n).map(|i| f.eval(i as f64 * dt)).collect();
    let mag: Vec<f64> = (0..n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, xi) in x.iter().enumerate() {
                let a = 2.0 * PI * (k * i) as f64 / n as f64;
                re += xi * a.cos();
                im -= xi * a.sin();
            }
            re.hypot(im)
        })
        .collect();
    let mut peaks: Vec<usize> = (1..n / 2 - 1).filter(|&k| mag[k] > mag[k - 1] && mag[k] >= mag[k + 1]).collect();
    peaks.sort_by(|a, b| mag[*b].total_cmp(&mag[*a]));
    let mut top: Vec<usize> = peaks[..4].to_vec();
    top.sort();
    let bin = |w: f64| (w * n as f64 * dt / (2.0 * PI)).round() as usize;
    let want: Vec<usize> = DEFAULT_FREQUENCIES.iter().map(|w| bin(*w)).collect();
    assert_eq!(top, want);
    // all remaining energy is leakage, far below the lines
    let weakest_line = want.iter().map(|&k| mag[k]).fold(f64::INFINITY, f64::min);
    assert!(peaks[4..].iter().all(|&k| mag[k] < 0.25 * weakest_line));
}

#[test]
fn noise_ratio_on_default_acceleration() {
    let tr = simulate_with(&OscillatorParams::default(), &ForcingSpec::default_with_seed(0), &SimConfig::default()).unwrap();
    let y = add_noise(&tr.a, 0.085, &mut RngStream::new(0).substream("measurement-noise")).unwrap();
    let eps: Vec<f64> = y.iter().zip(&tr.a).map(|(a, b)| a - b).collect();
    let r = rms(&eps) / rms(&tr.a);
    assert!((0.075..=0.095).contains(&r), "{r}");
    assert_eq!(add_noise(&[0.0; 16], 0.5, &mut RngStream::new(1)).unwrap(), vec![0.0; 16]);
}

#[test]
fn subsampling_examples() {
    let tr = simulate_with(&OscillatorParams::default(), &ForcingSpec::default_with_seed(0), &SimConfig::default()).unwrap();
    let (d1, _) = subsample(&tr, Selection::Stride(1)).unwrap();
    assert_eq!(d1.observation, d1.collocation);
    let (d16, obs) = subsample(&tr, Selection::Stride(16)).unwrap();
    assert!((1.0 / (obs.t[1] - obs.t[0]) - 0.5328).abs() < 1e-4);
    assert_eq!(d16.boundary, vec![0]);
    let (ds, _) = subsample(&tr, Selection::Sobol(256)).unwrap();
    let mut idx = ds.observation.clone();
    idx.dedup();
    assert_eq!(idx.len(), 256);
}

#[test]
fn csv_roundtrip_is_lossless() {
    let tr = simulate_with(&OscillatorParams::default(), &ForcingSpec::default_with_seed(2), &SimConfig { n: 100, ..SimConfig::default() }).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    assert!(buf.starts_with(b"t,u,v,a,f\n"));
    assert_eq!(Trajectory::read_csv(buf.as_slice()).unwrap(), tr);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_superposition(s1 in 0u64..1000, s2 in 0u64..1000, a1 in 0.1f64..2.0, a2 in 0.1f64..2.0) {
        let p = OscillatorParams::default().linear();
        let f1 = ForcingSpec::multisine(&DEFAULT_FREQUENCIES, a1, s1).unwrap();
        let f2 = ForcingSpec::multisine(&[0.4, 1.1], a2, s2).unwrap();
        let cfg = SimConfig { n: 256, ..SimConfig::default() };
        let r1 = simulate_with(&p, &f1, &cfg).unwrap();
        let r2 = simulate_with(&p, &f2, &cfg).unwrap();
        let r12 = simulate_with(&p, &f1.superpose(&f2), &cfg).unwrap();
        let sum: Vec<f64> = r1.u.iter().zip(&r2.u).map(|(a, b)| a + b).collect();
        prop_assert!(peml_core::metrics::rmse(&r12.u, &sum) <= 1e-9 * rms(&r12.u));
    }

    #[test]
    fn simulation_is_deterministic(seed in 0u64..1000) {
        let f = ForcingSpec::default_with_seed(seed);
        let cfg = SimConfig { n: 128, ..SimConfig::default() };
        let a = simulate_with(&OscillatorParams::default(), &f, &cfg).unwrap();
        let b = simulate_with(&OscillatorParams::default(), &f, &cfg).unwrap();
        prop_assert!(a.u.iter().zip(&b.u).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(a.v.iter().zip(&b.v).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn acceleration_column_follows_the_equation(seed in 0u64..1000) {
        let p = OscillatorParams::default();
        let tr = simulate_with(&p, &ForcingSpec::default_with_seed(seed), &SimConfig { n: 64, ..SimConfig::default() }).unwrap();
        for i in 0..tr.len() {
            let want = (tr.f[i] - p.c * tr.v[i] - p.k * tr.u[i] - p.k3 * tr.u[i].powi(3)) / p.m;
            prop_assert!((tr.a[i] - want).abs() <= 1e-12 * want.abs().max(1e-3));
        }
    }
}
