//! Stability margins for certainty-equivalent feedback and the stabilization
//! oracle built on them.

use alloc::format;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::op_norm;
use crate::matspec::{jordan_profile_default, SpectralProfile};
use crate::model::{CostSpec, DynamicsModel, ParameterPair};
use crate::riccati::{care_solve, care_solve_pair, kappa_star, CareOptions, RiccatiSolution};

/// Upper bound on `α(M − E)` given `‖V⁻¹EV‖₂` for the profile's similarity `V`.
pub fn eig_perturbation_bound(profile: &SpectralProfile, e_norm_similar: f64) -> Result<f64> {
    if !(e_norm_similar >= 0.0) {
        return Err(Error::Value(format!(
            "perturbation norm must be nonnegative, got {e_norm_similar}"
        )));
    }
    let m = profile.m as f64;
    let x = m.sqrt() * e_norm_similar;
    Ok(profile.abscissa + x.max(x.powf(1.0 / m)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginCertificate {
    /// `−α(Â + B̂K̂)`
    pub rho: f64,
    /// `‖P(Â, B̂)‖₂`
    pub zeta: f64,
    pub m_hat: usize,
    pub similarity_cond: f64,
    pub delta: f64,
    /// Deviation from the truth below which `K(Â, B̂)` keeps the true closed
    /// loop's abscissa under `−delta`.
    pub radius: f64,
}

/// `min(1, 1/‖K‖)·min(ρ−δ, (ρ−δ)^m) / (√m · cond)`.
pub fn margin_radius(rho: f64, delta: f64, m: usize, cond: f64, k_norm: f64) -> f64 {
    let gap = rho - delta;
    let spectral = gap.min(gap.powi(m as i32));
    (1.0 / k_norm).min(1.0) * spectral / ((m as f64).sqrt() * cond)
}

fn margin_options() -> CareOptions {
    // estimates far from the truth can be stiff; they are never members, so
    // a bounded effort is enough
    CareOptions {
        max_time: 2e3,
        max_steps: 20_000,
        ..CareOptions::default()
    }
}

fn certify(
    est: &ParameterPair,
    cost: &CostSpec,
    delta: f64,
) -> Result<(MarginCertificate, RiccatiSolution)> {
    if !(delta >= 0.0) {
        return Err(Error::Value(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    let sol = care_solve_pair(est, cost, &margin_options())?;
    let profile = jordan_profile_default(&sol.d)?;
    let rho = -profile.abscissa;
    if delta >= rho {
        return Err(Error::EmptyMargin { delta, rho });
    }
    let radius = margin_radius(
        rho,
        delta,
        profile.m,
        profile.similarity_cond,
        op_norm(&sol.k),
    );
    let cert = MarginCertificate {
        rho,
        zeta: op_norm(&sol.p),
        m_hat: profile.m,
        similarity_cond: profile.similarity_cond,
        delta,
        radius,
    };
    Ok((cert, sol))
}

/// Margin certificate for the feedback that is optimal for `est`.
pub fn stability_margin(
    est: &ParameterPair,
    cost: &CostSpec,
    delta: f64,
) -> Result<MarginCertificate> {
    certify(est, cost, delta).map(|(c, _)| c)
}

/// Radius around the truth within which estimates are uniformly stabilizing.
pub fn epsilon0(truth: &DynamicsModel, cost: &CostSpec) -> Result<f64> {
    let sol = care_solve(truth, cost, &CareOptions::default())?;
    kappa_star(&sol)
}

/// The set of estimates whose optimal feedback provably stabilizes the truth
/// with margin `delta0`. Membership needs the truth, so this only exists on
/// the simulation side.
#[derive(Debug, Clone)]
pub struct StabilizationOracle {
    pub delta0: f64,
    pub truth: DynamicsModel,
    pub cost: CostSpec,
    pub anchor: ParameterPair,
}

impl StabilizationOracle {
    /// `δ₀ = ρ★/2`, anchored at the truth.
    pub fn new(truth: DynamicsModel, cost: CostSpec) -> Result<Self> {
        let anchor = truth.params.clone();
        Self::with_anchor(truth, cost, anchor, None)
    }

    /// Explicit anchor and optional `δ₀`; fails unless the anchor is a member.
    pub fn with_anchor(
        truth: DynamicsModel,
        cost: CostSpec,
        anchor: ParameterPair,
        delta0: Option<f64>,
    ) -> Result<Self> {
        cost.check_dims(truth.dx(), truth.du())?;
        let delta0 = match delta0 {
            Some(d) => d,
            None => {
                let sol = care_solve(&truth, &cost, &CareOptions::default())?;
                -crate::matspec::spectral_abscissa(&sol.d)? / 2.0
            }
        };
        if !(delta0 > 0.0) {
            return Err(Error::Value(format!(
                "delta0 must be positive, got {delta0}"
            )));
        }
        let oracle = Self {
            delta0,
            truth,
            cost,
            anchor,
        };
        if !oracle_contains(&oracle, &oracle.anchor) {
            return Err(Error::Value("anchor is not certified by the oracle".into()));
        }
        Ok(oracle)
    }
}

fn member_gain(oracle: &StabilizationOracle, est: &ParameterPair) -> Option<DMatrix<f64>> {
    if est.dx() != oracle.truth.dx() || est.du() != oracle.truth.du() {
        return None;
    }
    let psi = est.deviation(&oracle.truth.params);
    if !psi.is_finite() {
        return None;
    }
    let (cert, sol) = certify(est, &oracle.cost, oracle.delta0).ok()?;
    (psi < cert.radius).then_some(sol.k)
}

/// `Ψ(est) < stability_margin(est, δ₀).radius`; solver failures count as
/// non-membership.
pub fn oracle_contains(oracle: &StabilizationOracle, est: &ParameterPair) -> bool {
    member_gain(oracle, est).is_some()
}

/// Relative bisection tolerance along the segment to the anchor.
pub const PROJECTION_TOL: f64 = 1e-6;

/// Moves `est` toward the anchor until it is certified. Returns the
/// projected pair, its optimal gain, and whether any move was needed.
pub fn oracle_project_with_gain(
    oracle: &StabilizationOracle,
    est: &ParameterPair,
) -> (ParameterPair, DMatrix<f64>, bool) {
    if let Some(k) = member_gain(oracle, est) {
        return (est.clone(), k, false);
    }
    let anchor_gain =
        member_gain(oracle, &oracle.anchor).expect("oracle anchor is certified at construction");
    // est is off; walk toward the anchor, keeping `hi` feasible
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut best = (oracle.anchor.clone(), anchor_gain);
    while hi - lo > PROJECTION_TOL {
        let mid = 0.5 * (lo + hi);
        let cand = est.lerp(&oracle.anchor, mid);
        match member_gain(oracle, &cand) {
            Some(k) => {
                hi = mid;
                best = (cand, k);
            }
            None => lo = mid,
        }
    }
    (best.0, best.1, true)
}

pub fn oracle_project(oracle: &StabilizationOracle, est: &ParameterPair) -> ParameterPair {
    oracle_project_with_gain(oracle, est).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matspec::jordan_profile_default;
    use nalgebra::dmatrix;

    fn scalar_model() -> (DynamicsModel, CostSpec) {
        (
            DynamicsModel::new(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0]).unwrap(),
            CostSpec::new(dmatrix![1.0], dmatrix![1.0]).unwrap(),
        )
    }

    #[test]
    fn perturbation_bound_examples() {
        let p = jordan_profile_default(&dmatrix![-2.0, 0.0; 0.0, -3.0]).unwrap();
        assert!((eig_perturbation_bound(&p, 0.5).unwrap() + 1.5).abs() < 1e-12);
        assert_eq!(eig_perturbation_bound(&p, 0.0).unwrap(), p.abscissa);
        assert!(eig_perturbation_bound(&p, -1.0).is_err());

        let j = jordan_profile_default(&dmatrix![-1.0, 1.0; 0.0, -1.0]).unwrap();
        assert_eq!(j.m, 2);
        let x = 0.25 / 2f64.sqrt();
        assert!((eig_perturbation_bound(&j, x).unwrap() - (j.abscissa + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn radius_formula() {
        assert!((margin_radius(1.0, 0.5, 1, 1.0, 2.0) - 0.25).abs() < 1e-15);
        assert!((margin_radius(1.0, 0.0, 1, 1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_margin() {
        let (m, c) = scalar_model();
        let cert = stability_margin(&m.params, &c, 0.0).unwrap();
        assert!((cert.rho - 1.0).abs() < 1e-8);
        assert!((cert.radius - 1.0).abs() < 1e-7);
        assert!(matches!(
            stability_margin(&m.params, &c, cert.rho),
            Err(Error::EmptyMargin { .. })
        ));
    }

    #[test]
    fn scalar_epsilon0() {
        let (m, c) = scalar_model();
        assert!((epsilon0(&m, &c).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn oracle_basics() {
        let (m, c) = scalar_model();
        let o = StabilizationOracle::new(m.clone(), c).unwrap();
        assert!((o.delta0 - 0.5).abs() < 1e-8);
        assert!(oracle_contains(&o, &m.params));
        assert_eq!(oracle_project(&o, &m.params), m.params);

        let far = ParameterPair::new(dmatrix![5.0], dmatrix![0.1]).unwrap();
        assert!(!oracle_contains(&o, &far));
        let p = oracle_project(&o, &far);
        assert!(oracle_contains(&o, &p));
        assert!(p != m.params);
        assert!(p.deviation(&far) <= m.params.deviation(&far));
    }
}
