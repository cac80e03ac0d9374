//! The episodic randomized-estimates policy and its reference policies.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::estimator::{
    episode_rng, estimation_error, lambda_min_gram, randomization_sigma,
    randomized_estimate_with_sigma, self_normalized_ratio, EstimatorState, ParameterEstimate,
};
use crate::margin::{oracle_project_with_gain, StabilizationOracle};
use crate::model::{CostSpec, DynamicsModel, ParameterPair};
use crate::riccati::{care_solve, CareOptions};
use crate::sde::{snap_up, BrownianPath, Scheme, Simulator, TrajectoryLog};

/// `[γ⁰, γ¹, …, γᴺ]` with `γᴺ ≤ horizon < γᴺ⁺¹`.
pub fn episode_schedule(gamma: f64, horizon: f64) -> Result<Vec<f64>> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::Value(format!("gamma must exceed 1, got {gamma}")));
    }
    if !(horizon >= 1.0) || !horizon.is_finite() {
        return Err(Error::Value(format!(
            "horizon must be at least 1, got {horizon}"
        )));
    }
    let mut out = Vec::new();
    let mut n = 0i32;
    loop {
        let t = gamma.powi(n);
        // tolerate representation error at an exact power
        if t > horizon * (1.0 + 1e-12) {
            break;
        }
        out.push(t);
        n += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Randomized estimates with decaying randomization `σ_n`.
    Randomized,
    /// Constant randomization `σ_n ≡ σ₀`.
    Persistent,
    /// The optimal gain `K★` throughout.
    Optimal,
    FixedGain(DMatrix<f64>),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Randomized => "randomized",
            Mode::Persistent => "persistent",
            Mode::Optimal => "optimal",
            Mode::FixedGain(_) => "fixed-gain",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub gamma: f64,
    pub sigma0: f64,
    pub x0: DVector<f64>,
    /// Initial estimate; the oracle anchor when absent.
    pub theta0: Option<ParameterPair>,
    /// Seed for the per-episode randomization streams.
    pub seed: u64,
    pub scheme: Scheme,
    /// Spacing of the estimator diagnostics; zero disables them.
    pub diagnostic_every: f64,
}

impl PolicyConfig {
    pub fn new(dx: usize, seed: u64) -> Self {
        Self {
            gamma: 1.2,
            sigma0: 1.0,
            x0: DVector::zeros(dx),
            theta0: None,
            seed,
            scheme: Scheme::Exact,
            diagnostic_every: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub n: usize,
    pub tau: f64,
    pub estimate: ParameterEstimate,
    pub gain: DMatrix<f64>,
    pub sigma: f64,
    pub projected: bool,
    /// `Ψ(θ̂_n)` against the truth.
    pub psi: f64,
}

/// Estimator diagnostics sampled during a learning run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostic {
    pub t: f64,
    pub self_normalized: f64,
    pub gram_lambda_min: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub trajectory: TrajectoryLog,
    pub episodes: Vec<EpisodeRecord>,
    pub mode: Mode,
    pub scheme: Scheme,
    pub path_seed: u64,
    pub diagnostics: Vec<Diagnostic>,
}

/// Runs `mode` on `truth` driven by `path`.
pub fn run(
    truth: &DynamicsModel,
    cost: &CostSpec,
    oracle: &StabilizationOracle,
    config: &PolicyConfig,
    path: &BrownianPath,
    mode: Mode,
) -> Result<RunRecord> {
    match mode {
        Mode::Randomized | Mode::Persistent => {
            run_learning(truth, cost, oracle, config, path, mode)
        }
        Mode::Optimal => {
            let k = care_solve(truth, cost, &CareOptions::default())?.k;
            run_fixed(truth, cost, config, path, k, Mode::Optimal)
        }
        Mode::FixedGain(k) => run_fixed(truth, cost, config, path, k.clone(), Mode::FixedGain(k)),
    }
}

pub fn run_adaptive(
    truth: &DynamicsModel,
    cost: &CostSpec,
    oracle: &StabilizationOracle,
    config: &PolicyConfig,
    path: &BrownianPath,
) -> Result<RunRecord> {
    run_learning(truth, cost, oracle, config, path, Mode::Randomized)
}

pub fn run_persistent(
    truth: &DynamicsModel,
    cost: &CostSpec,
    oracle: &StabilizationOracle,
    config: &PolicyConfig,
    path: &BrownianPath,
) -> Result<RunRecord> {
    run_learning(truth, cost, oracle, config, path, Mode::Persistent)
}

fn run_fixed(
    truth: &DynamicsModel,
    cost: &CostSpec,
    config: &PolicyConfig,
    path: &BrownianPath,
    k: DMatrix<f64>,
    mode: Mode,
) -> Result<RunRecord> {
    let mut sim = Simulator::new(truth, cost, &config.x0, path, config.scheme)?;
    let g = sim.add_gain(k)?;
    sim.advance(g, path.steps())?;
    Ok(RunRecord {
        trajectory: sim.finish(),
        episodes: Vec::new(),
        mode,
        scheme: config.scheme,
        path_seed: path.seed,
        diagnostics: Vec::new(),
    })
}

fn run_learning(
    truth: &DynamicsModel,
    cost: &CostSpec,
    oracle: &StabilizationOracle,
    config: &PolicyConfig,
    path: &BrownianPath,
    mode: Mode,
) -> Result<RunRecord> {
    let horizon = path.steps() as f64 * path.dt;
    let taus = episode_schedule(config.gamma, horizon)?;
    let mut est = EstimatorState::new(
        truth.dx(),
        truth.du(),
        truth.dw(),
        config.gamma,
        config.sigma0,
    )?;
    let mut sim = Simulator::new(truth, cost, &config.x0, path, config.scheme)?;

    let theta0 = config
        .theta0
        .clone()
        .unwrap_or_else(|| oracle.anchor.clone());
    let (_, k0, _) = oracle_project_with_gain(oracle, &theta0);
    let mut gain = sim.add_gain(k0)?;

    let diag_times: Vec<f64> = if config.diagnostic_every > 0.0 {
        let count = (horizon / config.diagnostic_every).floor() as usize;
        (1..=count)
            .map(|i| i as f64 * config.diagnostic_every)
            .collect()
    } else {
        Vec::new()
    };
    let mut diag_iter = diag_times.iter().peekable();
    let mut diagnostics = Vec::new();

    let mut episodes = Vec::with_capacity(taus.len());
    for (n, &tau) in taus.iter().enumerate() {
        let end = snap_up(tau, path.dt);
        sim.advance(gain, end)?;
        while let Some(&&t) = diag_iter.peek() {
            if snap_up(t, path.dt) > end {
                break;
            }
            est.ingest(sim.log(), path, snap_up(t, path.dt))?;
            diagnostics.push(Diagnostic {
                t,
                self_normalized: self_normalized_ratio(&est),
                gram_lambda_min: lambda_min_gram(&est),
            });
            diag_iter.next();
        }
        est.ingest(sim.log(), path, end)?;
        est.n = n;

        let sigma = match mode {
            Mode::Persistent => config.sigma0,
            _ => randomization_sigma(n, config.gamma, config.sigma0),
        };
        let mut rng = episode_rng(config.seed, n);
        let (estimate, k) = randomized_estimate_with_sigma(&est, n, sigma, &mut rng, oracle);
        let psi = estimation_error(&estimate, truth);
        gain = sim.add_gain(k.clone())?;
        episodes.push(EpisodeRecord {
            n,
            tau,
            projected: estimate.projected,
            estimate,
            gain: k,
            sigma,
            psi,
        });
    }
    sim.advance(gain, path.steps())?;
    let trajectory = sim.finish();
    // remaining diagnostic checkpoints after the last episode time
    for &t in diag_iter {
        let k = snap_up(t, path.dt).min(trajectory.steps());
        est.ingest(&trajectory, path, k)?;
        diagnostics.push(Diagnostic {
            t,
            self_normalized: self_normalized_ratio(&est),
            gram_lambda_min: lambda_min_gram(&est),
        });
    }
    Ok(RunRecord {
        trajectory,
        episodes,
        mode,
        scheme: config.scheme,
        path_seed: path.seed,
        diagnostics,
    })
}
