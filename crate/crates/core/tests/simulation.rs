mod common;

use ctrl_rl_core::margin::StabilizationOracle;
use ctrl_rl_core::matspec::{noise_gramian, spectral_abscissa};
use ctrl_rl_core::policy::{run, run_adaptive, Mode, PolicyConfig};
use ctrl_rl_core::regret::{constant_gain_gap, policy_diff_term, regret_coupled, regret_report};
use ctrl_rl_core::riccati::{care_solve, CareOptions};
use ctrl_rl_core::sde::{empirical_covariance, make_path, Scheme};
use ctrl_rl_core::{CostSpec, DynamicsModel};
use nalgebra::{dmatrix, DMatrix, DVector};

fn scalar(c: f64) -> (DynamicsModel, CostSpec) {
    (
        DynamicsModel::new(dmatrix![0.0], dmatrix![1.0], dmatrix![c]).unwrap(),
        CostSpec::new(dmatrix![1.0], dmatrix![1.0]).unwrap(),
    )
}

fn toy(c: f64) -> (DynamicsModel, CostSpec) {
    let a = dmatrix![0.5, 1.0; 0.0, -0.3];
    let b = dmatrix![0.0; 1.0];
    (
        DynamicsModel::new(a, b, DMatrix::identity(2, 2) * c).unwrap(),
        CostSpec::new(DMatrix::identity(2, 2), dmatrix![1.0]).unwrap(),
    )
}

#[test]
fn optimal_policy_has_zero_regret() {
    let (m, c) = toy(0.3);
    let oracle = StabilizationOracle::new(m.clone(), c.clone()).unwrap();
    let path = make_path(5, 50.0, 0.01, 2).unwrap();
    let cfg = PolicyConfig {
        x0: DVector::from_vec(vec![1.0, -1.0]),
        ..PolicyConfig::new(2, 5)
    };
    let rec = run(&m, &c, &oracle, &cfg, &path, Mode::Optimal).unwrap();
    let r = regret_coupled(&m, &c, &rec, &path).unwrap();
    assert!(r.iter().all(|v| *v == 0.0));
    let sol = care_solve(&m, &c, &CareOptions::default()).unwrap();
    assert_eq!(policy_diff_term(&m, &c, &sol, &rec, 50.0).unwrap(), 0.0);
}

#[test]
fn quiet_system_at_rest_has_zero_regret() {
    let (m, c) = toy(0.0);
    let oracle = StabilizationOracle::new(m.clone(), c.clone()).unwrap();
    let path = make_path(5, 20.0, 0.01, 2).unwrap();
    let k = dmatrix![-1.0, -3.0];
    let rec = run(
        &m,
        &c,
        &oracle,
        &PolicyConfig::new(2, 5),
        &path,
        Mode::FixedGain(k),
    )
    .unwrap();
    let rep = regret_report(&m, &c, &rec, &path, 1.2, &[1.0, 10.0, 20.0]).unwrap();
    // C = 0 leaves the rate constants undefined
    assert!(rep.rates.is_none());
    assert!(rep.regret.iter().all(|v| *v == 0.0));
    assert!(regret_coupled(&m, &c, &rec, &path)
        .unwrap()
        .iter()
        .all(|v| *v == 0.0));
    let sol = care_solve(&m, &c, &CareOptions::default()).unwrap();
    assert_eq!(policy_diff_term(&m, &c, &sol, &rec, 20.0).unwrap(), 0.0);
}

#[test]
fn noiseless_regret_matches_constant_gain_gap() {
    let (m, c) = toy(0.0);
    let oracle = StabilizationOracle::new(m.clone(), c.clone()).unwrap();
    let sol = care_solve(&m, &c, &CareOptions::default()).unwrap();
    let k = &sol.k * 1.5;
    let x0 = DVector::from_vec(vec![1.0, -0.5]);
    // trapezoid value of the left sum, then Richardson over two step sizes
    let trapezoid = |dt: f64| {
        let path = make_path(1, 60.0, dt, 2).unwrap();
        let cfg = PolicyConfig {
            x0: x0.clone(),
            ..PolicyConfig::new(2, 1)
        };
        let rec = run(&m, &c, &oracle, &cfg, &path, Mode::FixedGain(k.clone())).unwrap();
        let r = regret_coupled(&m, &c, &rec, &path).unwrap();
        r[r.len() - 1] - 0.5 * r[1]
    };
    let (coarse, fine) = (trapezoid(1e-3), trapezoid(5e-4));
    let r_inf = (4.0 * fine - coarse) / 3.0;
    let gap = constant_gain_gap(&m, &c, &k, &x0).unwrap();
    assert!((r_inf - gap).abs() <= 1e-6 * gap, "{r_inf} vs {gap}");
}

#[test]
fn regret_requires_the_generating_path() {
    let (m, c) = scalar(1.0);
    let oracle = StabilizationOracle::new(m.clone(), c.clone()).unwrap();
    let path = make_path(3, 10.0, 0.01, 1).unwrap();
    let rec = run(
        &m,
        &c,
        &oracle,
        &PolicyConfig::new(1, 3),
        &path,
        Mode::Optimal,
    )
    .unwrap();
    let other = make_path(4, 10.0, 0.01, 1).unwrap();
    assert!(regret_coupled(&m, &c, &rec, &other).is_err());
    let coarse = make_path(3, 10.0, 0.02, 1).unwrap();
    assert!(regret_coupled(&m, &c, &rec, &coarse).is_err());
}

#[test]
fn stationary_covariance_scalar() {
    let (m, c) = scalar(1.0);
    let sol = care_solve(&m, &c, &CareOptions::default()).unwrap();
    let v_inf = noise_gramian(&sol.d, &m.c, f64::INFINITY).unwrap();
    assert!((v_inf[(0, 0)] - 0.5).abs() < 1e-12);
    let oracle = StabilizationOracle::new(m.clone(), c.clone()).unwrap();
    for scheme in [Scheme::Exact, Scheme::EulerMaruyama] {
        let path = make_path(8, 500.0, 0.01, 1).unwrap();
        let cfg = PolicyConfig {
            scheme,
            ..PolicyConfig::new(1, 8)
        };
        let rec = run(&m, &c, &oracle, &cfg, &path, Mode::Optimal).unwrap();
        let emp = empirical_covariance(&rec.trajectory, 0.0, 500.0).unwrap();
        assert!(
            (emp[(0, 0)] / 0.5 - 1.0).abs() < 0.1,
            "{scheme:?}: {}",
            emp[(0, 0)]
        );
    }
}

#[test]
fn adaptive_run_on_scalar_system() {
    let (m, c) = scalar(1.0);
    let oracle = StabilizationOracle::new(m.clone(), c.clone()).unwrap();
    let path = make_path(21, 500.0, 0.01, 1).unwrap();
    let cfg = PolicyConfig::new(1, 21);
    let rec = run_adaptive(&m, &c, &oracle, &cfg, &path).unwrap();
    assert_eq!(rec.episodes.len(), 35);
    for ep in &rec.episodes {
        assert!(ep.psi.is_finite());
        let alpha = spectral_abscissa(&m.params.closed_loop(&ep.gain)).unwrap();
        assert!(alpha < -oracle.delta0, "episode {} abscissa {alpha}", ep.n);
    }
    assert!(!rec.diagnostics.is_empty());
    let again = run_adaptive(&m, &c, &oracle, &cfg, &path).unwrap();
    assert_eq!(rec.trajectory, again.trajectory);

    let rep = regret_report(&m, &c, &rec, &path, 1.2, &[1.0, 100.0, 500.0]).unwrap();
    assert_eq!(rep.regret.len(), 3);
    assert_eq!(rep.est_err_sq_norm.len(), 35);
    assert!(rep.policy_diff_term.iter().all(|v| v.is_finite()));
}

#[test]
fn x29a_optimal_cost_rate() {
    let (m, c) = common::x29a();
    let sol = care_solve(&m, &c, &CareOptions::default()).unwrap();
    let oracle = StabilizationOracle::new(m.clone(), c.clone()).unwrap();
    let path = make_path(2, 200.0, 0.01, 4).unwrap();
    let rec = run(
        &m,
        &c,
        &oracle,
        &PolicyConfig::new(4, 2),
        &path,
        Mode::Optimal,
    )
    .unwrap();
    let avg = rec.trajectory.cost_integral.last().unwrap() / 200.0;
    // one replicate only; the tight check averages many
    assert!(
        (avg / sol.optimal_avg_cost.unwrap() - 1.0).abs() < 0.3,
        "{avg}"
    );
}
