use peml_core::pgnn::*;
use peml_core::sim::{simulate_with, ForcingSpec, OscillatorParams, SimConfig};

#[test]
fn exact_prior_needs_no_correction() {
    let p = OscillatorParams::default().linear();
    let f = ForcingSpec::default_with_seed(0);
    let grid = SimConfig::default();
    let truth = simulate_with(&p, &f, &grid).unwrap();
    let prior = PriorModel::from_known(&p).predict(&f, &grid).unwrap();
    assert!(prior.u.iter().zip(&truth.u).all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1e-9)));
    let cfg = PgnnConfig { restarts: 1, ..PgnnConfig::default() };
    let o = run_pgnn(&truth, &p, &f, &grid, 4, &cfg).unwrap();
    let (du, dv) = o.result.net.predict(&truth.t);
    let amax = du.iter().chain(&dv).fold(0.0f64, |a, x| a.max(x.abs()));
    assert!(amax < 1e-2, "{amax}");
}

#[test]
fn correction_improves_both_states_and_is_additive() {
    let p = OscillatorParams::default();
    let f = ForcingSpec::default_with_seed(0);
    let grid = SimConfig::default();
    let truth = simulate_with(&p, &f, &grid).unwrap();
    let prior = PriorModel::from_known(&p);
    let before = *prior.params();
    let o = run_pgnn(&truth, &p, &f, &grid, 4, &PgnnConfig::default()).unwrap();
    assert_eq!(*prior.params(), before);
    assert!(o.rmse_u_prior > 0.0);
    assert!(o.rmse_u < o.rmse_u_prior, "{} vs {}", o.rmse_u, o.rmse_u_prior);
    assert!(o.rmse_v < o.rmse_v_prior, "{} vs {}", o.rmse_v, o.rmse_v_prior);
    let (du, dv) = o.result.net.predict(&truth.t);
    for i in 0..truth.len() {
        assert_eq!(o.result.u_hat[i], o.prior.u[i] + du[i]);
        assert_eq!(o.result.v_hat[i], o.prior.v[i] + dv[i]);
    }
    let mut buf = Vec::new();
    write_csv(&mut buf, &truth, &o).unwrap();
    assert!(buf.starts_with(b"t,u_true,u_prior,u_hat,v_true,v_prior,v_hat\n"));
}

#[test]
fn velocity_never_enters_the_objective() {
    let p = OscillatorParams::default();
    let f = ForcingSpec::default_with_seed(0);
    let grid = SimConfig { n: 128, ..SimConfig::default() };
    let prior = PriorModel::from_known(&p).predict(&f, &grid).unwrap();
    let truth = simulate_with(&p, &f, &grid).unwrap();
    let idx: Vec<usize> = (0..128).step_by(4).collect();
    let u: Vec<f64> = idx.iter().map(|&i| truth.u[i]).collect();
    let cfg = PgnnConfig::default();
    let theta = cfg.net.init(&mut peml_core::numkit::RngStream::new(0));
    let a = GuidedLoss::new(&prior, &idx, &u, &cfg).unwrap().loss_grad(&theta).unwrap();
    // scrambling the truth's velocity cannot matter: only u is passed in
    let mut other = truth.clone();
    other.v.iter_mut().for_each(|v| *v = -*v);
    let u2: Vec<f64> = idx.iter().map(|&i| other.u[i]).collect();
    let b = GuidedLoss::new(&prior, &idx, &u2, &cfg).unwrap().loss_grad(&theta).unwrap();
    assert_eq!(a.0, b.0);
    assert!(GuidedLoss::new(&prior, &[], &[], &cfg).is_err());
}
