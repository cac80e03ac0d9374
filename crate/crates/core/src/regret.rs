//! Regret against the optimal policy, its policy-differentiation
//! counterpart `R̃_T`, and the rate constants that scale both.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{lambda_min, op_norm, psd_sqrt};
use crate::matspec::matrix_exp;
use crate::model::{CostSpec, DynamicsModel};
use crate::policy::RunRecord;
use crate::riccati::{care_solve, CareOptions, RiccatiSolution};
use crate::sde::{simulate, snap_up, BrownianPath, GainSchedule};

/// `R_T` at every grid point of the record, against `π★` re-simulated on the
/// same path.
pub fn regret_coupled(
    truth: &DynamicsModel,
    cost: &CostSpec,
    record: &RunRecord,
    path: &BrownianPath,
) -> Result<Vec<f64>> {
    let log = &record.trajectory;
    if record.path_seed != path.seed || log.dt != path.dt || log.steps() != path.steps() {
        return Err(Error::Value(format!(
            "record (seed {}, dt {}, {} steps) was not simulated on this path (seed {}, dt {}, {} steps)",
            record.path_seed,
            log.dt,
            log.steps(),
            path.seed,
            path.dt,
            path.steps()
        )));
    }
    let sol = care_solve(truth, cost, &CareOptions::default())?;
    let x0 = log.state(0);
    let star = simulate(
        truth,
        cost,
        &GainSchedule::constant(sol.k),
        &x0,
        path,
        record.scheme,
    )?;
    Ok(log
        .cost_integral
        .iter()
        .zip(&star.cost_integral)
        .map(|(a, b)| a - b)
        .collect())
}

/// `E_t = e^{D★ᵀt} P★ e^{D★t}`.
pub fn e_matrix(d_star: &DMatrix<f64>, p_star: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(Error::Value(format!("t must be nonnegative, got {t}")));
    }
    let phi = matrix_exp(d_star, t)?;
    Ok(phi.transpose() * p_star * phi)
}

/// `R̃_T` for each `T` in `horizons`, from the record's states and gains.
pub fn policy_diff_terms(
    truth: &DynamicsModel,
    cost: &CostSpec,
    sol: &RiccatiSolution,
    record: &RunRecord,
    horizons: &[f64],
) -> Result<Vec<f64>> {
    let log = &record.trajectory;
    let dt = log.dt;
    let n = log.steps();
    let r_half = psd_sqrt(&cost.r);
    let deltas: Vec<DMatrix<f64>> = log.gains.iter().map(|k| k - &sol.k).collect();

    // prefix sums of the first integrand and per-step B★ΔK x
    let mut first = Vec::with_capacity(n + 1);
    first.push(0.0);
    let mut xs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for k in 0..n {
        let x = log.states.column(k).into_owned();
        let dk = &deltas[log.gain_index[k]];
        let du = dk * &x;
        first.push(first[k] + (&r_half * &du).norm_squared() * dt);
        ws.push(truth.b() * du);
        xs.push(x);
    }

    // E_{i·dt} for i = 1.. until it is negligible against P★
    let phi = matrix_exp(&sol.d, dt)?;
    let p_norm = sol.p.norm();
    let mut table: Vec<DMatrix<f64>> = Vec::new();
    let mut e = phi.transpose() * &sol.p * &phi;
    while table.len() < n {
        let small = e.norm() <= 1e-16 * p_norm;
        table.push(e.clone());
        if small {
            break;
        }
        e = phi.transpose() * &e * &phi;
    }

    let mut out = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let kt = snap_up(t, dt);
        if kt > n {
            return Err(Error::Value(format!(
                "T = {t} is beyond the record's horizon {}",
                n as f64 * dt
            )));
        }
        let lo = kt.saturating_sub(table.len());
        let mut second = 0.0;
        for j in lo..kt {
            let ej = &table[kt - j - 1];
            second += xs[j].dot(&(ej * &ws[j]));
        }
        out.push(first[kt] - 2.0 * second * dt);
    }
    Ok(out)
}

pub fn policy_diff_term(
    truth: &DynamicsModel,
    cost: &CostSpec,
    sol: &RiccatiSolution,
    record: &RunRecord,
    t: f64,
) -> Result<f64> {
    Ok(policy_diff_terms(truth, cost, sol, record, &[t])?[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub omega_r: f64,
    pub omega_e: f64,
    pub omega_pi: f64,
}

pub fn rate_constants(
    truth: &DynamicsModel,
    cost: &CostSpec,
    sol: &RiccatiSolution,
    gamma: f64,
) -> Result<RateConstants> {
    if !(gamma > 1.0) {
        return Err(Error::Value(format!("gamma must exceed 1, got {gamma}")));
    }
    let c = &truth.c;
    let cct_min = lambda_min(&(c * c.transpose()));
    if !(cct_min > 0.0) {
        return Err(Error::Value(
            "noise covariance C Cᵀ is singular; rates need λmin(C Cᵀ) > 0".into(),
        ));
    }
    let (dx, du, dw) = (truth.dx() as f64, truth.du() as f64, truth.dw() as f64);
    let c_norm = op_norm(c);
    let p_norm = op_norm(&sol.p);
    let (lq, lr) = (lambda_min(&cost.q), lambda_min(&cost.r));
    let omega_r = c_norm * p_norm.powf(1.5) * dw / (lq.sqrt() * lr.sqrt());
    let omega_e = (dx + du) * (dx / gamma.ln() + dw * c_norm * c_norm / cct_min);
    let omega_pi = (gamma - 1.0) * c_norm * c_norm * p_norm.powi(6) * op_norm(&cost.r)
        / (lq * lq * lr.powi(4))
        * omega_e;
    Ok(RateConstants {
        omega_r,
        omega_e,
        omega_pi,
    })
}

/// `points` log-spaced times in `[t_min, t_max]`.
pub fn log_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    if points <= 1 || t_max <= t_min {
        return alloc::vec![t_max];
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone)]
pub struct RegretReport {
    pub grid: Vec<f64>,
    pub regret: Vec<f64>,
    /// `T^{−1/2} R_T`
    pub regret_norm: Vec<f64>,
    pub policy_diff_term: Vec<f64>,
    /// `(τ_n, τ_n^{1/2} Ψ_n²)` per episode.
    pub est_err_sq_norm: Vec<(f64, f64)>,
    /// Absent when `C Cᵀ` is singular.
    pub rates: Option<RateConstants>,
}

/// Regret, `R̃_T` and normalized errors on `grid` (times snap up to the
/// simulation grid). `gamma` only feeds the rate constants.
pub fn regret_report(
    truth: &DynamicsModel,
    cost: &CostSpec,
    record: &RunRecord,
    path: &BrownianPath,
    gamma: f64,
    grid: &[f64],
) -> Result<RegretReport> {
    let sol = care_solve(truth, cost, &CareOptions::default())?;
    let all = regret_coupled(truth, cost, record, path)?;
    let n = record.trajectory.steps();
    let mut regret = Vec::with_capacity(grid.len());
    for &t in grid {
        let k = snap_up(t, path.dt);
        if k > n {
            return Err(Error::Value(format!("grid time {t} beyond horizon")));
        }
        regret.push(all[k]);
    }
    let regret_norm = grid
        .iter()
        .zip(&regret)
        .map(|(t, r)| if *t > 0.0 { r / t.sqrt() } else { 0.0 })
        .collect();
    let policy_diff_term = policy_diff_terms(truth, cost, &sol, record, grid)?;
    let est_err_sq_norm = record
        .episodes
        .iter()
        .map(|e| (e.tau, e.tau.sqrt() * e.psi * e.psi))
        .collect();
    Ok(RegretReport {
        grid: grid.to_vec(),
        regret,
        regret_norm,
        policy_diff_term,
        est_err_sq_norm,
        rates: rate_constants(truth, cost, &sol, gamma).ok(),
    })
}

/// Noiseless excess cost `∫‖R^{1/2}(K − K★)e^{(A+BK)t}x0‖² dt`, the noiseless limit
/// of `R_∞` for a constant gain.
pub fn constant_gain_gap(
    truth: &DynamicsModel,
    cost: &CostSpec,
    k: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<f64> {
    let (total, rhs) = crate::riccati::suboptimal_cost_identity(&truth.params, cost, k, x0)?;
    let sol = care_solve(truth, cost, &CareOptions::default())?;
    let opt = (x0.transpose() * &sol.p * x0)[(0, 0)];
    // both sides agree; average them to halve the rounding
    Ok(0.5 * (total + rhs) - opt)
}
