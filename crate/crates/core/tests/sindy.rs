use peml_core::numkit::RngStream;
use peml_core::sim::{simulate, ForcingSpec, OscillatorParams, Trajectory};
use peml_core::sindy::*;
use proptest::prelude::*;

fn default_traj(p: &OscillatorParams) -> Trajectory {
    simulate(p, &ForcingSpec::default_with_seed(0), 1024, 8.525, [0.0, 0.0]).unwrap()
}

#[test]
fn recovers_duffing_support_and_coefficients() {
    let p = OscillatorParams::default();
    let tr = default_traj(&p);
    let lib = build_library(&tr, &default_features()).unwrap();
    assert_eq!(lib.theta.shape(), (1024, 11));
    let y: Vec<f64> = tr.a.iter().map(|a| a * p.m).collect();
    let s = stlsq(&lib, &y, &StlsqConfig::default()).unwrap();
    assert_eq!(s.active(), ["u", "v", "u^3", "f"]);
    for (name, want) in [("u", -15.0), ("v", -1.0), ("u^3", -100.0), ("f", 1.0)] {
        let got = s.coefficient(name).unwrap();
        assert!((got - want).abs() < 0.01 * want.abs(), "{name}: {got}");
    }
    let fit = lib.theta.matvec(&s.xi);
    let num: f64 = fit.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = y.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(num / den < 1e-3);
}

#[test]
fn linear_case_drops_cubic_term() {
    let p = OscillatorParams::default().linear();
    let s = identify(&default_traj(&p), &default_features(), p.m, &StlsqConfig::default()).unwrap();
    assert_eq!(s.coefficient("u^3"), Some(0.0));
    assert_eq!(s.active(), ["u", "v", "f"]);
}

#[test]
fn rerun_on_own_support_is_a_fixed_point() {
    let p = OscillatorParams::default();
    let tr = default_traj(&p);
    let lib = build_library(&tr, &default_features()).unwrap();
    let y: Vec<f64> = tr.a.iter().map(|a| a * p.m).collect();
    let s = stlsq(&lib, &y, &StlsqConfig::default()).unwrap();
    let keep: Vec<usize> = (0..s.support.len()).filter(|&i| s.support[i]).collect();
    let again = stlsq(&lib.restrict(&keep), &y, &StlsqConfig::default()).unwrap();
    for (j, &i) in keep.iter().enumerate() {
        assert!((again.xi[j] - s.xi[i]).abs() <= 1e-12 * s.xi[i].abs().max(1.0));
    }
}

#[test]
fn noisy_derivative_option_runs() {
    let p = OscillatorParams::default();
    let tr = default_traj(&p);
    let lib = build_library(&tr, &default_features()).unwrap();
    let y: Vec<f64> = central_difference(&tr.v, 1.0 / 8.525).iter().map(|a| a * p.m).collect();
    let s = stlsq(&lib, &y, &StlsqConfig::default()).unwrap();
    assert!(s.coefficient("f").unwrap() > 0.5);
}

fn random_library(seed: u64, n: usize) -> (Trajectory, CandidateLibrary) {
    let mut rng = RngStream::new(seed);
    let mut tr = Trajectory::with_capacity(n);
    for i in 0..n {
        tr.push(i as f64, rng.normal(), rng.normal(), 0.0, rng.normal());
    }
    let lib = build_library(&tr, &default_features()).unwrap();
    (tr, lib)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scaling_target_scales_coefficients(seed in 0u64..1000, s in 0.1f64..10.0, c in proptest::collection::vec(-3.0f64..3.0, 11)) {
        let (_, lib) = random_library(seed, 60);
        let xi: Vec<f64> = c.iter().enumerate().map(|(i, x)| if i % 3 == 0 { 0.0 } else { *x }).collect();
        let mut rng = RngStream::new(seed + 1);
        let y: Vec<f64> = lib.theta.matvec(&xi).iter().map(|v| v + 0.05 * rng.normal()).collect();
        let cfg = StlsqConfig { threshold: 0.3, ..StlsqConfig::default() };
        let base = stlsq(&lib, &y, &cfg).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * s).collect();
        let scaled = stlsq(&lib, &ys, &StlsqConfig { threshold: cfg.threshold * s, ..cfg }).unwrap();
        prop_assert_eq!(&base.support, &scaled.support);
        for (a, b) in base.xi.iter().zip(&scaled.xi) {
            prop_assert!((a * s - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn thresholded_entries_are_exactly_zero(seed in 0u64..1000, t in 0.0f64..2.0) {
        let (_, lib) = random_library(seed, 40);
        let mut rng = RngStream::new(seed + 7);
        let y: Vec<f64> = (0..40).map(|_| rng.normal()).collect();
        let s = stlsq(&lib, &y, &StlsqConfig { threshold: t, ..StlsqConfig::default() }).unwrap();
        for (x, on) in s.xi.iter().zip(&s.support) {
            if !on { prop_assert_eq!(*x, 0.0); }
        }
    }
}
