use ctrl_rl_core::estimator::EstimatorState;
use ctrl_rl_core::margin::{
    eig_perturbation_bound, oracle_contains, oracle_project, stability_margin, StabilizationOracle,
};
use ctrl_rl_core::matspec::{
    jordan_profile_default, lyapunov_solve, matrix_exp, noise_gramian, spectral_abscissa,
};
use ctrl_rl_core::riccati::{
    care_solve_pair, riccati_residual, suboptimal_cost_identity, CareOptions,
};
use ctrl_rl_core::{CostSpec, DynamicsModel, ParameterPair};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(n: usize, m: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * m).prop_map(move |v| DMatrix::from_vec(n, m, v) * scale)
}

/// Random matrix shifted so its abscissa is at most −0.1.
fn hurwitz(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n, 2.0).prop_map(move |m| {
        let a = spectral_abscissa(&m).unwrap();
        m - DMatrix::identity(n, n) * (a.max(0.0) + 0.1)
    })
}

fn unit_cost(n: usize, m: usize) -> CostSpec {
    CostSpec::new(DMatrix::identity(n, n), DMatrix::identity(m, m)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exp_semigroup(m in matrix(3, 3, 1.0), s in 0.0..2.0f64, t in 0.0..2.0f64) {
        let lhs = matrix_exp(&m, s + t).unwrap();
        let rhs = matrix_exp(&m, s).unwrap() * matrix_exp(&m, t).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn lyapunov_residual(d in hurwitz(3), s in matrix(3, 3, 1.0)) {
        let s = &s * s.transpose();
        let v = lyapunov_solve(&d, &s).unwrap();
        let res = d.transpose() * &v + &v * &d + &s;
        prop_assert!(res.norm() <= 1e-8 * (1.0 + v.norm()));
    }

    #[test]
    fn gramian_grows_with_horizon(d in hurwitz(2), c in matrix(2, 2, 1.0), h in 0.1..3.0f64) {
        let short = noise_gramian(&d, &c, h).unwrap();
        let long = noise_gramian(&d, &c, 2.0 * h).unwrap();
        let inf = noise_gramian(&d, &c, f64::INFINITY).unwrap();
        let tol = 1e-9 * (1.0 + inf.norm());
        prop_assert!((&long - &short).symmetric_eigenvalues().min() >= -tol);
        prop_assert!((&inf - &long).symmetric_eigenvalues().min() >= -tol);
    }

    #[test]
    fn care_is_unique_from_any_psd_start(a in matrix(2, 2, 2.0), b in matrix(2, 1, 1.0)) {
        prop_assume!(b.norm() > 0.2);
        let params = ParameterPair::new(a, b).unwrap();
        let cost = unit_cost(2, 1);
        let from_zero = care_solve_pair(&params, &cost, &CareOptions::default());
        prop_assume!(from_zero.is_ok());
        let from_zero = from_zero.unwrap();
        let opts = CareOptions { initial: Some(DMatrix::identity(2, 2)), ..CareOptions::default() };
        let from_id = care_solve_pair(&params, &cost, &opts).unwrap();
        prop_assert!((&from_zero.p - &from_id.p).norm() <= 1e-7 * (1.0 + from_zero.p.norm()));
        let g = riccati_residual(&params, &cost, &from_zero.p).unwrap();
        prop_assert!(g.norm() <= 1e-8 * (1.0 + cost.q.norm()));
    }

    #[test]
    fn optimal_gain_minimizes_noiseless_cost(
        a in matrix(2, 2, 1.0), b in matrix(2, 2, 1.0), dk in matrix(2, 2, 0.3), x in matrix(2, 1, 1.0)
    ) {
        let params = ParameterPair::new(a, b).unwrap();
        let cost = unit_cost(2, 2);
        let sol = care_solve_pair(&params, &cost, &CareOptions::default());
        prop_assume!(sol.is_ok());
        let sol = sol.unwrap();
        let k = &sol.k + dk;
        prop_assume!(spectral_abscissa(&params.closed_loop(&k)).unwrap() < -1e-3);
        let x0 = DVector::from_column_slice(x.as_slice());
        let (total, rhs) = suboptimal_cost_identity(&params, &cost, &k, &x0).unwrap();
        let opt = (x0.transpose() * &sol.p * &x0)[(0, 0)];
        prop_assert!(total >= opt - 1e-9 * (1.0 + opt));
        prop_assert!((total - rhs).abs() <= 1e-6 * (1.0 + total.abs()));
    }

    #[test]
    fn eig_bound_is_sound(m in matrix(3, 3, 1.5), e in matrix(3, 3, 0.3)) {
        let prof = jordan_profile_default(&m).unwrap();
        prop_assume!(!prof.ill_conditioned);
        let bound = eig_perturbation_bound(&prof, prof.similar_norm(&e).unwrap()).unwrap();
        let actual = spectral_abscissa(&(&m + &e)).unwrap();
        prop_assert!(actual <= bound + 1e-9, "{actual} > {bound}");
    }

    #[test]
    fn accumulate_is_additive(
        x in matrix(2, 1, 1.0), u in matrix(1, 1, 1.0), dx in matrix(2, 1, 1.0),
        y in matrix(2, 1, 1.0), v in matrix(1, 1, 1.0), dy in matrix(2, 1, 1.0)
    ) {
        let dw = DVector::zeros(2);
        let step = |s: &mut EstimatorState, x: &DMatrix<f64>, u: &DMatrix<f64>, d: &DMatrix<f64>| {
            s.accumulate(x.column(0), u.column(0), d.column(0), dw.column(0), 0.01).unwrap();
        };
        let mut both = EstimatorState::new(2, 1, 2, 1.2, 1.0).unwrap();
        step(&mut both, &x, &u, &dx);
        step(&mut both, &y, &v, &dy);
        let mut first = EstimatorState::new(2, 1, 2, 1.2, 1.0).unwrap();
        step(&mut first, &x, &u, &dx);
        let mut second = EstimatorState::new(2, 1, 2, 1.2, 1.0).unwrap();
        step(&mut second, &y, &v, &dy);
        prop_assert!((&both.gram - (&first.gram + &second.gram)).norm() < 1e-14);
        prop_assert!((&both.cross - (&first.cross + &second.cross)).norm() < 1e-14);
    }
}

fn toy() -> (DynamicsModel, CostSpec) {
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, -0.3]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    (
        DynamicsModel::new(a, b, DMatrix::identity(2, 2) * 0.1).unwrap(),
        unit_cost(2, 1),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn certified_estimates_stabilize_the_truth(e in matrix(2, 3, 1.0), frac in 0.05..0.95f64) {
        let (m, c) = toy();
        let delta = 0.1;
        let cert0 = stability_margin(&m.params, &c, delta).unwrap();
        let dir = e.clone() / e.norm().max(1e-12);
        let est = ParameterPair::from_stacked(&(m.params.stacked() + dir * frac * cert0.radius), 2);
        let Ok(cert) = stability_margin(&est, &c, delta) else { return Ok(()) };
        let psi = est.deviation(&m.params);
        prop_assume!(psi < cert.radius);
        let k = care_solve_pair(&est, &c, &CareOptions::default()).unwrap().k;
        prop_assert!(spectral_abscissa(&m.params.closed_loop(&k)).unwrap() < -delta);
    }

    #[test]
    fn projection_lands_in_the_set(e in matrix(2, 3, 1.0), scale in 0.0..3.0f64) {
        let (m, c) = toy();
        let oracle = StabilizationOracle::new(m.clone(), c).unwrap();
        let est = ParameterPair::from_stacked(&(m.params.stacked() + e * scale), 2);
        let proj = oracle_project(&oracle, &est);
        prop_assert!(oracle_contains(&oracle, &proj));
        if oracle_contains(&oracle, &est) {
            prop_assert_eq!(proj, est);
        }
    }
}
