//! Continuous-time least squares for `[A B]` with randomized, certified
//! estimates.

use alloc::format;

use nalgebra::{DMatrix, DVector, DVectorView};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{lambda_max, op_norm, pinv, sym_fn};
use crate::margin::{oracle_project_with_gain, StabilizationOracle};
use crate::model::{DynamicsModel, ParameterPair};
use crate::sde::{BrownianPath, TrajectoryLog};

pub const DEFAULT_SV_CUTOFF: f64 = 1e-12;

/// Running integrals `V = ∫ZZᵀds`, `∫Z dXᵀ` and the diagnostic `∫Z dWᵀ`,
/// with `Z = [X; U]` taken at the left endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub gram: DMatrix<f64>,
    pub cross: DMatrix<f64>,
    /// Needs the true noise increments; simulation-side only.
    pub noise_cross: DMatrix<f64>,
    pub elapsed: f64,
    pub gamma: f64,
    pub sigma0: f64,
    pub n: usize,
    dx: usize,
    /// Log steps already ingested by [`EstimatorState::ingest`].
    consumed: usize,
}

impl EstimatorState {
    pub fn new(dx: usize, du: usize, dw: usize, gamma: f64, sigma0: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Value(format!("gamma must exceed 1, got {gamma}")));
        }
        if !(sigma0 >= 0.0) || !sigma0.is_finite() {
            return Err(Error::Value(format!(
                "sigma0 must be nonnegative, got {sigma0}"
            )));
        }
        let m = dx + du;
        Ok(Self {
            gram: DMatrix::zeros(m, m),
            cross: DMatrix::zeros(m, dx),
            noise_cross: DMatrix::zeros(m, dw),
            elapsed: 0.0,
            gamma,
            sigma0,
            n: 0,
            dx,
            consumed: 0,
        })
    }

    pub fn dx(&self) -> usize {
        self.dx
    }

    pub fn du(&self) -> usize {
        self.gram.nrows() - self.dx
    }

    pub fn dw(&self) -> usize {
        self.noise_cross.ncols()
    }

    pub fn accumulate(
        &mut self,
        x: DVectorView<f64>,
        u: DVectorView<f64>,
        dx: DVectorView<f64>,
        dw: DVectorView<f64>,
        ds: f64,
    ) -> Result<()> {
        if !(ds > 0.0) {
            return Err(Error::Value(format!("ds must be positive, got {ds}")));
        }
        if x.len() != self.dx
            || dx.len() != self.dx
            || u.len() != self.du()
            || dw.len() != self.dw()
        {
            return Err(Error::Dimension(format!(
                "accumulate: got x {}, u {}, dx {}, dw {}; expected {}, {}, {}, {}",
                x.len(),
                u.len(),
                dx.len(),
                dw.len(),
                self.dx,
                self.du(),
                self.dx,
                self.dw()
            )));
        }
        let mut z = DVector::zeros(self.gram.nrows());
        z.rows_mut(0, self.dx).copy_from(&x);
        z.rows_mut(self.dx, self.du()).copy_from(&u);
        self.gram.ger(ds, &z, &z, 1.0);
        self.cross.ger(1.0, &z, &dx, 1.0);
        self.noise_cross.ger(1.0, &z, &dw, 1.0);
        self.elapsed += ds;
        Ok(())
    }

    /// Ingests logged steps `[consumed, until)`, taking `dX` from consecutive
    /// logged states and `dW` from the path.
    pub fn ingest(&mut self, log: &TrajectoryLog, path: &BrownianPath, until: usize) -> Result<()> {
        let until = until.min(log.steps());
        for k in self.consumed..until {
            let dx = log.states.column(k + 1) - log.states.column(k);
            self.accumulate(
                log.states.column(k),
                log.actions.column(k),
                dx.column(0),
                path.increments.column(k),
                log.dt,
            )?;
        }
        self.consumed = self.consumed.max(until);
        Ok(())
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEstimate {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub episode: usize,
    pub projected: bool,
}

impl ParameterEstimate {
    pub fn pair(&self) -> ParameterPair {
        ParameterPair {
            a: self.a_hat.clone(),
            b: self.b_hat.clone(),
        }
    }

    fn from_pair(p: ParameterPair, episode: usize, projected: bool) -> Self {
        Self {
            a_hat: p.a,
            b_hat: p.b,
            episode,
            projected,
        }
    }
}

/// `[Â B̂] = crossᵀ · pinv(gram)`.
pub fn least_squares(state: &EstimatorState, sv_cutoff: f64) -> ParameterEstimate {
    // gram is symmetric PSD, so its singular values are its eigenvalues
    let theta = state.cross.transpose() * pinv(&state.gram, sv_cutoff);
    ParameterEstimate::from_pair(
        ParameterPair::from_stacked(&theta, state.dx),
        state.n,
        false,
    )
}

/// `σ₀ (γ^{−n} n)^{1/4}`.
pub fn randomization_sigma(n: usize, gamma: f64, sigma0: f64) -> f64 {
    sigma0 * (gamma.powi(-(n as i32)) * n as f64).powf(0.25)
}

/// Per-episode RNG, keyed by `(seed, n)` so that replicates and episodes
/// draw from disjoint streams.
pub fn episode_rng(seed: u64, n: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(n as u64 + 1);
    rng
}

/// `rows × cols` matrix of i.i.d. `N(0, σ²)` entries.
pub fn gaussian_matrix(rows: usize, cols: usize, sigma: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(rows, cols);
    for v in g.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = sigma * z;
    }
    g
}

/// Least squares plus `N(0, σ²)` noise, projected into the oracle's set.
/// Also returns the optimal gain for the returned estimate.
pub fn randomized_estimate_with_sigma(
    state: &EstimatorState,
    n: usize,
    sigma: f64,
    rng: &mut impl Rng,
    oracle: &StabilizationOracle,
) -> (ParameterEstimate, DMatrix<f64>) {
    let ls = least_squares(state, DEFAULT_SV_CUTOFF);
    let mut theta = ls.pair().stacked();
    if sigma > 0.0 {
        theta += gaussian_matrix(theta.nrows(), theta.ncols(), sigma, rng);
    }
    let (pair, k, projected) =
        oracle_project_with_gain(oracle, &ParameterPair::from_stacked(&theta, state.dx));
    (ParameterEstimate::from_pair(pair, n, projected), k)
}

/// Randomized estimate with the decaying schedule `σ_n`.
pub fn randomized_estimate(
    state: &EstimatorState,
    n: usize,
    rng: &mut impl Rng,
    oracle: &StabilizationOracle,
) -> ParameterEstimate {
    let sigma = randomization_sigma(n, state.gamma, state.sigma0);
    randomized_estimate_with_sigma(state, n, sigma, rng, oracle).0
}

/// `Ψ = ‖Â − A★‖₂ + ‖B̂ − B★‖₂`.
pub fn estimation_error(est: &ParameterEstimate, truth: &DynamicsModel) -> f64 {
    est.pair().deviation(&truth.params)
}

/// `‖(I + V)^{−1/2} ∫Z dWᵀ‖₂² / (m · d_W · ln(e + λmax(V)))`.
pub fn self_normalized_ratio(state: &EstimatorState) -> f64 {
    let m = state.gram.nrows() as f64;
    let dw = state.dw() as f64;
    let whiten = sym_fn(&state.gram, |l| 1.0 / (1.0 + l.max(0.0)).sqrt());
    let num = op_norm(&(whiten * &state.noise_cross)).powi(2);
    let lmax = lambda_max(&state.gram).max(0.0);
    num / (m * dw * (core::f64::consts::E + lmax).ln())
}

/// `λmin(V)`, the excitation accumulated so far.
pub fn lambda_min_gram(state: &EstimatorState) -> f64 {
    crate::linalg::lambda_min(&state.gram)
}
