//! Continuous algebraic Riccati equation and the quantities derived from
//! its stabilizing solution.
//!
//! The solver integrates the matrix ODE `Ṁ = g(M)` from a PSD start, where
//! `g(M) = AᵀM + MA − MBR⁻¹BᵀM + Q`, and finishes with Newton–Kleinman
//! steps once the implied feedback is stabilizing.

use alloc::format;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{ensure_shape, lambda_min, op_norm, psd_sqrt, symmetrize};
use crate::matspec::{jordan_profile_default, lyapunov_solve, spectral_abscissa};
use crate::model::{CostSpec, DynamicsModel, ParameterPair};

/// `g(M) = AᵀM + MA − M B R⁻¹ Bᵀ M + Q`.
pub fn riccati_residual(
    params: &ParameterPair,
    cost: &CostSpec,
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    cost.check_dims(params.dx(), params.du())?;
    ensure_shape(m, params.dx(), params.dx(), "M")?;
    Ok(residual_unchecked(params, cost, m))
}

fn residual_unchecked(params: &ParameterPair, cost: &CostSpec, m: &DMatrix<f64>) -> DMatrix<f64> {
    let (a, b) = (&params.a, &params.b);
    let mb = m * b;
    a.transpose() * m + m * a - &mb * cost.r_inv() * mb.transpose() + &cost.q
}

/// Stabilizing CARE solution together with its feedback.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    /// `K = −R⁻¹BᵀP`
    pub k: DMatrix<f64>,
    /// `D = A + BK`
    pub d: DMatrix<f64>,
    /// `‖g(P)‖_F`
    pub residual: f64,
    /// `tr(P C Cᵀ)`, known only when the noise matrix was supplied.
    pub optimal_avg_cost: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CareOptions {
    /// Stop once `‖g(M)‖_F ≤ tol · (1 + ‖Q‖_F)`.
    pub tol: f64,
    /// Give up after integrating the ODE over this much time.
    pub max_time: f64,
    /// Switch to Newton–Kleinman refinement once the ODE iterate stabilizes.
    pub newton: bool,
    /// Initial PSD matrix; zero when absent.
    pub initial: Option<DMatrix<f64>>,
    /// Cap on attempted integration steps (stiff inputs would otherwise crawl).
    pub max_steps: usize,
}

impl Default for CareOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_time: 1e4,
            newton: true,
            initial: None,
            max_steps: 1_000_000,
        }
    }
}

// local error tolerance for the step-doubling controller
const STEP_TOL: f64 = 1e-9;
// accepted steps between checks of whether the implied gain stabilizes
const NEWTON_CHECK_EVERY: usize = 16;

fn rk4_step(params: &ParameterPair, cost: &CostSpec, m: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let k1 = residual_unchecked(params, cost, m);
    let k2 = residual_unchecked(params, cost, &(m + &k1 * (h / 2.0)));
    let k3 = residual_unchecked(params, cost, &(m + &k2 * (h / 2.0)));
    let k4 = residual_unchecked(params, cost, &(m + &k3 * h));
    symmetrize(&(m + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}

fn gain_for(params: &ParameterPair, cost: &CostSpec, p: &DMatrix<f64>) -> DMatrix<f64> {
    -(cost.r_inv() * params.b.transpose() * p)
}

/// Newton–Kleinman from the feedback implied by `m`; `None` if that
/// feedback is not stabilizing or the iteration fails to reach `target`.
/// From a stabilizing start every iterate stays stabilizing.
fn newton_refine(
    params: &ParameterPair,
    cost: &CostSpec,
    m: &DMatrix<f64>,
    target: f64,
) -> Option<(DMatrix<f64>, f64)> {
    let mut p = m.clone();
    for _ in 0..60 {
        let k = gain_for(params, cost, &p);
        let d = params.closed_loop(&k);
        let forcing = &cost.q + k.transpose() * &cost.r * &k;
        let next = lyapunov_solve(&d, &symmetrize(&forcing)).ok()?;
        let res = residual_unchecked(params, cost, &next).norm();
        if !res.is_finite() {
            return None;
        }
        p = next;
        if res <= target {
            return Some((p, res));
        }
    }
    None
}

/// Solves the CARE for `(A, B)` by integrating `Ṁ = g(M)`; once the gain
/// implied by the iterate stabilizes `A + BK`, Newton–Kleinman finishes.
pub fn care_solve_pair(
    params: &ParameterPair,
    cost: &CostSpec,
    opts: &CareOptions,
) -> Result<RiccatiSolution> {
    let n = params.dx();
    cost.check_dims(n, params.du())?;
    if !(opts.tol > 0.0) {
        return Err(Error::Value(format!(
            "tolerance {} must be positive",
            opts.tol
        )));
    }
    let target = opts.tol * (1.0 + cost.q.norm());
    let mut m = match &opts.initial {
        Some(m0) => {
            ensure_shape(m0, n, n, "initial M")?;
            symmetrize(m0)
        }
        None => DMatrix::zeros(n, n),
    };
    let mut res = residual_unchecked(params, cost, &m).norm();
    let scale =
        1.0 + op_norm(&params.a) + op_norm(&(&params.b * cost.r_inv() * params.b.transpose()));
    let mut h = 0.1 / scale;
    let mut t = 0.0;
    let (mut attempts, mut accepted) = (0usize, 0usize);
    let mut next_check = NEWTON_CHECK_EVERY;

    while res > target {
        if t > opts.max_time || attempts >= opts.max_steps {
            return Err(Error::Convergence(format!(
                "Riccati flow residual {res:.3e} above {target:.3e} after t = {t:.1} ({attempts} steps)"
            )));
        }
        if opts.newton && accepted >= next_check {
            next_check = accepted + NEWTON_CHECK_EVERY;
            let d = params.closed_loop(&gain_for(params, cost, &m));
            if spectral_abscissa(&d).is_ok_and(|a| a < 0.0) {
                if let Some((p, r)) = newton_refine(params, cost, &m, target) {
                    m = p;
                    res = r;
                    break;
                }
                // stabilizing but stalled: back off before retrying
                next_check = accepted + 8 * NEWTON_CHECK_EVERY;
            }
        }
        attempts += 1;
        let full = rk4_step(params, cost, &m, h);
        let half = rk4_step(params, cost, &rk4_step(params, cost, &m, h / 2.0), h / 2.0);
        let err = (&full - &half).norm() / (15.0 * (1.0 + half.norm()));
        if !err.is_finite() || half.norm() > 1e150 {
            h /= 4.0;
            if h < 1e-14 {
                return Err(Error::Convergence("Riccati flow blew up".into()));
            }
            continue;
        }
        let factor = if err > 0.0 {
            (0.9 * (STEP_TOL / err).powf(0.2)).clamp(0.2, 2.0)
        } else {
            2.0
        };
        if err <= STEP_TOL {
            accepted += 1;
            t += h;
            m = half;
            res = residual_unchecked(params, cost, &m).norm();
        }
        h *= factor;
    }

    let k = gain_for(params, cost, &m);
    let d = params.closed_loop(&k);
    let alpha = spectral_abscissa(&d)?;
    if alpha >= 0.0 {
        return Err(Error::Convergence(format!(
            "Riccati fixed point is not stabilizing (abscissa {alpha})"
        )));
    }
    Ok(RiccatiSolution {
        p: m,
        k,
        d,
        residual: res,
        optimal_avg_cost: None,
    })
}

/// [`care_solve_pair`] for a full model; also fills `optimal_avg_cost`.
pub fn care_solve(
    model: &DynamicsModel,
    cost: &CostSpec,
    opts: &CareOptions,
) -> Result<RiccatiSolution> {
    let mut sol = care_solve_pair(&model.params, cost, opts)?;
    sol.optimal_avg_cost = Some(optimal_average_cost(&sol, &model.c)?);
    Ok(sol)
}

/// `tr(P C Cᵀ)`, the optimal long-run average cost.
pub fn optimal_average_cost(sol: &RiccatiSolution, c: &DMatrix<f64>) -> Result<f64> {
    if c.nrows() != sol.p.nrows() {
        return Err(Error::Dimension(format!(
            "noise matrix has {} rows, P is {}x{}",
            c.nrows(),
            sol.p.nrows(),
            sol.p.ncols()
        )));
    }
    Ok((&sol.p * c * c.transpose()).trace())
}

/// Upper bound on `∫₀^∞ ‖e^{Dt}‖₂² dt` by `tr` of the Lyapunov solution
/// with identity forcing.
pub fn exp_square_integral_bound(d: &DMatrix<f64>) -> Result<f64> {
    let n = d.nrows();
    Ok(lyapunov_solve(d, &DMatrix::identity(n, n))?.trace())
}

/// `κ★`: the radius around the truth inside which the optimal feedback is
/// Lipschitz (and which also serves as the stabilization radius `ε₀`).
pub fn kappa_star(sol: &RiccatiSolution) -> Result<f64> {
    let alpha = spectral_abscissa(&sol.d)?;
    if alpha >= 0.0 {
        return Err(Error::Instability { abscissa: alpha });
    }
    let profile = jordan_profile_default(&sol.d)?;
    let rho = -alpha;
    let m = profile.m as i32;
    let spectral = rho.min(rho.powi(m)) / ((m as f64).sqrt() * profile.similarity_cond);
    let energy = 1.0 / (4.0 * exp_square_integral_bound(&sol.d)?);
    Ok(spectral.min(energy) / op_norm(&sol.k).max(1.0))
}

/// `(κ★, β★)` for the true system; `‖K(θ̂) − K★‖₂ ≤ β★ Ψ(θ̂)` whenever
/// `Ψ(θ̂) ≤ κ★`.
pub fn lipschitz_bounds(
    truth: &ParameterPair,
    cost: &CostSpec,
    sol: &RiccatiSolution,
) -> Result<(f64, f64)> {
    let kappa = kappa_star(sol)?;
    let p = op_norm(&sol.p);
    let b = op_norm(&truth.b);
    let (lq, lr) = (lambda_min(&cost.q), lambda_min(&cost.r));
    let inner = (2.0 * (b + kappa) * p / lr).max(1.0);
    let beta = 2.0 * p / lr * (1.0 + 4.0 * b / lq * p * inner);
    Ok((kappa, beta))
}

/// Cost of the noiseless closed loop `ẋ = (A + BK)x` from `x0`, and the
/// right-hand side `x0ᵀP x0 + ∫‖R^{1/2}(K − K★)e^{(A+BK)t}x0‖² dt`.
pub fn suboptimal_cost_identity(
    params: &ParameterPair,
    cost: &CostSpec,
    k: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<(f64, f64)> {
    ensure_shape(k, params.du(), params.dx(), "K")?;
    if x0.len() != params.dx() {
        return Err(Error::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            params.dx()
        )));
    }
    let dk = params.closed_loop(k);
    let alpha = spectral_abscissa(&dk)?;
    if alpha >= 0.0 {
        return Err(Error::Instability { abscissa: alpha });
    }
    let sol = care_solve_pair(params, cost, &CareOptions::default())?;
    let stage = symmetrize(&(&cost.q + k.transpose() * &cost.r * k));
    let total = lyapunov_solve(&dk, &stage)?;
    let delta = k - &sol.k;
    let gap = lyapunov_solve(&dk, &symmetrize(&(delta.transpose() * &cost.r * &delta)))?;
    let quad = |m: &DMatrix<f64>| (x0.transpose() * m * x0)[(0, 0)];
    Ok((quad(&total), quad(&sol.p) + quad(&gap)))
}

/// `R^{1/2}`, used by the regret integrands.
pub fn r_sqrt(cost: &CostSpec) -> DMatrix<f64> {
    psd_sqrt(&cost.r)
}
