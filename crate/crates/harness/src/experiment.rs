use anyhow::{Context, Result};
use ctrl_rl_core::margin::{epsilon0, StabilizationOracle};
use ctrl_rl_core::matspec::spectral_abscissa;
use ctrl_rl_core::policy::{run, Diagnostic, Mode, PolicyConfig};
use ctrl_rl_core::regret::{log_grid, rate_constants, regret_report, RateConstants};
use ctrl_rl_core::riccati::{care_solve, CareOptions, RiccatiSolution};
use ctrl_rl_core::sde::make_path;
use ctrl_rl_core::{CostSpec, DynamicsModel, ParameterPair};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::preset::{build_model, offset_estimate};

/// Everything shared by the replicates of one experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub truth: DynamicsModel,
    pub cost: CostSpec,
    pub solution: RiccatiSolution,
    pub epsilon0: f64,
    pub theta0: ParameterPair,
    pub oracle: StabilizationOracle,
    pub mode: Mode,
    /// Undefined for degenerate noise.
    pub rates: Option<RateConstants>,
    pub grid: Vec<f64>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (truth, cost) = build_model(cfg)?;
        let solution = care_solve(&truth, &cost, &CareOptions::default())
            .context("solving the Riccati equation for the true system")?;
        let eps0 = epsilon0(&truth, &cost)?;
        let theta0 = offset_estimate(&truth.params, cfg.anchor_scale * eps0);
        let rho = -spectral_abscissa(&solution.d)?;
        let oracle = StabilizationOracle::with_anchor(
            truth.clone(),
            cost.clone(),
            theta0.clone(),
            Some(cfg.delta0_fraction * rho),
        )
        .context("initial estimate is not certified; lower anchor_scale")?;
        let mode = cfg.core_mode(&solution.k);
        let rates = rate_constants(&truth, &cost, &solution, cfg.gamma).ok();
        let grid = log_grid(1.0, cfg.horizon, cfg.regret_points);
        Ok(Self {
            truth,
            cost,
            solution,
            epsilon0: eps0,
            theta0,
            oracle,
            mode,
            rates,
            grid,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub n: usize,
    pub tau: f64,
    pub psi_sq: f64,
    pub sigma: f64,
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub t: f64,
    pub regret: f64,
    pub policy_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub episodes: Vec<EpisodeRow>,
    pub regret: Vec<RegretRow>,
    pub diagnostics: Vec<Diagnostic>,
    /// Time-averaged cost over the whole horizon.
    pub average_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub replicates: Vec<ReplicateResult>,
    pub failures: Vec<Failure>,
}

pub fn replicate_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    cfg.base_seed.wrapping_add(r as u64)
}

/// One replicate; depends only on the config, the setup and `r`.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    setup: &Setup,
    r: usize,
) -> std::result::Result<ReplicateResult, Failure> {
    let seed = replicate_seed(cfg, r);
    let fail = |e: ctrl_rl_core::Error| Failure {
        replicate: r,
        seed,
        error: e.to_string(),
    };
    let truth = &setup.truth;
    let path = make_path(seed, cfg.horizon, cfg.dt, truth.dw()).map_err(fail)?;
    let policy = PolicyConfig {
        gamma: cfg.gamma,
        sigma0: cfg.sigma0,
        x0: DVector::zeros(truth.dx()),
        theta0: Some(setup.theta0.clone()),
        seed,
        scheme: cfg.scheme.into(),
        diagnostic_every: 10.0,
    };
    let record = run(
        truth,
        &setup.cost,
        &setup.oracle,
        &policy,
        &path,
        setup.mode.clone(),
    )
    .map_err(fail)?;
    let report =
        regret_report(truth, &setup.cost, &record, &path, cfg.gamma, &setup.grid).map_err(fail)?;
    let episodes = record
        .episodes
        .iter()
        .map(|e| EpisodeRow {
            n: e.n,
            tau: e.tau,
            psi_sq: e.psi * e.psi,
            sigma: e.sigma,
            projected: e.projected,
        })
        .collect();
    let regret = report
        .grid
        .iter()
        .zip(&report.regret)
        .zip(&report.policy_diff_term)
        .map(|((&t, &regret), &policy_diff)| RegretRow {
            t,
            regret,
            policy_diff,
        })
        .collect();
    let horizon = record.trajectory.steps() as f64 * record.trajectory.dt;
    Ok(ReplicateResult {
        replicate: r,
        seed,
        episodes,
        regret,
        diagnostics: record.diagnostics,
        average_cost: record
            .trajectory
            .cost_integral
            .last()
            .copied()
            .unwrap_or(0.0)
            / horizon,
    })
}

/// All replicates on `workers` threads (0 = rayon's default). Results come
/// back in replicate order whatever the scheduling.
pub fn run_replicates(
    cfg: &ExperimentConfig,
    setup: &Setup,
    workers: usize,
) -> Result<ExperimentResults> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    let outcomes: Vec<_> = pool.install(|| {
        (0..cfg.n_replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, setup, r))
            .collect()
    });
    let mut results = ExperimentResults {
        replicates: Vec::new(),
        failures: Vec::new(),
    };
    for o in outcomes {
        match o {
            Ok(r) => results.replicates.push(r),
            Err(f) => results.failures.push(f),
        }
    }
    Ok(results)
}
