//! Linear Itô SDE simulation under piecewise-constant linear feedback.
//!
//! Runs driven by the same [`BrownianPath`] are coupled: each step consumes
//! the same raw increment regardless of the active gain.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{ensure_shape, psd_factor};
use crate::matspec::{matrix_exp, noise_gramian};
use crate::model::{quad, CostSpec, DynamicsModel};

/// Grid count for `horizon / dt`, tolerant of representation error
/// (`1.0 / 0.01` must give 100, not 101).
pub fn grid_steps(horizon: f64, dt: f64) -> usize {
    let r = horizon / dt;
    let near = r.round();
    if (r - near).abs() <= 1e-9 * near.max(1.0) {
        near as usize
    } else {
        r.ceil() as usize
    }
}

/// Sampled Brownian increments on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// `d_W × N`, column `k` is `W((k+1)dt) − W(k dt)`.
    pub increments: DMatrix<f64>,
}

impl BrownianPath {
    pub fn steps(&self) -> usize {
        self.increments.ncols()
    }

    pub fn dw(&self) -> usize {
        self.increments.nrows()
    }
}

pub fn make_path(seed: u64, horizon: f64, dt: f64, dw: usize) -> Result<BrownianPath> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Value(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::Value(format!(
            "horizon must be at least dt ({dt}), got {horizon}"
        )));
    }
    let n = grid_steps(horizon, dt);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let s = dt.sqrt();
    // column-major fill: one increment vector after another
    let mut increments = DMatrix::zeros(dw, n);
    for v in increments.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * s;
    }
    Ok(BrownianPath {
        dt,
        horizon,
        seed,
        increments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// `X⁺ = e^{D dt} X + L ξ` with `L Lᵀ` the exact one-step noise covariance.
    #[default]
    Exact,
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub times: Vec<f64>,
    /// `d_X × (N+1)`
    pub states: DMatrix<f64>,
    /// `d_U × (N+1)`, `actions[k] = K_active · states[k]`.
    pub actions: DMatrix<f64>,
    /// Index into `gains` of the gain active on step `k` (length `N`).
    pub gain_index: Vec<usize>,
    pub gains: Vec<DMatrix<f64>>,
    /// `cost_integral[k] = Σ_{j<k} c(X_j, U_j)·dt`.
    pub cost_integral: Vec<f64>,
}

impl TrajectoryLog {
    pub fn steps(&self) -> usize {
        self.gain_index.len()
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.column(k).into_owned()
    }
}

/// Step index of the first grid point at or after `t`.
pub fn snap_up(t: f64, dt: f64) -> usize {
    if t <= 0.0 {
        0
    } else {
        grid_steps(t, dt)
    }
}

struct StepCache {
    gain: usize,
    phi: DMatrix<f64>,
    noise: DMatrix<f64>,
    k: DMatrix<f64>,
}

/// Incremental simulator; the policy layer advances it segment by segment.
pub struct Simulator<'a> {
    model: &'a DynamicsModel,
    cost: &'a CostSpec,
    path: &'a BrownianPath,
    scheme: Scheme,
    log: TrajectoryLog,
    cache: Option<StepCache>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        model: &'a DynamicsModel,
        cost: &'a CostSpec,
        x0: &DVector<f64>,
        path: &'a BrownianPath,
        scheme: Scheme,
    ) -> Result<Self> {
        cost.check_dims(model.dx(), model.du())?;
        if x0.len() != model.dx() {
            return Err(Error::Dimension(format!(
                "x0 has length {}, expected {}",
                x0.len(),
                model.dx()
            )));
        }
        if path.dw() != model.dw() {
            return Err(Error::Dimension(format!(
                "path carries {} noise channels, model has {}",
                path.dw(),
                model.dw()
            )));
        }
        if scheme == Scheme::Exact && model.dw() < model.dx() {
            return Err(Error::Dimension(format!(
                "exact scheme needs at least d_X = {} noise channels, got {}",
                model.dx(),
                model.dw()
            )));
        }
        let n = path.steps();
        let mut states = DMatrix::zeros(model.dx(), n + 1);
        states.set_column(0, x0);
        let log = TrajectoryLog {
            dt: path.dt,
            times: (0..=n).map(|k| k as f64 * path.dt).collect(),
            states,
            actions: DMatrix::zeros(model.du(), n + 1),
            gain_index: Vec::with_capacity(n),
            gains: Vec::new(),
            cost_integral: {
                let mut v = Vec::with_capacity(n + 1);
                v.push(0.0);
                v
            },
        };
        Ok(Self {
            model,
            cost,
            path,
            scheme,
            log,
            cache: None,
        })
    }

    /// Steps taken so far.
    pub fn position(&self) -> usize {
        self.log.gain_index.len()
    }

    pub fn total_steps(&self) -> usize {
        self.path.steps()
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn add_gain(&mut self, k: DMatrix<f64>) -> Result<usize> {
        ensure_shape(&k, self.model.du(), self.model.dx(), "gain")?;
        self.log.gains.push(k);
        Ok(self.log.gains.len() - 1)
    }

    fn prepare(&mut self, gain: usize) -> Result<()> {
        if matches!(&self.cache, Some(c) if c.gain == gain) {
            return Ok(());
        }
        let k = self.log.gains[gain].clone();
        let d = self.model.params.closed_loop(&k);
        let dt = self.path.dt;
        let (phi, noise) = match self.scheme {
            Scheme::Exact => {
                let phi = matrix_exp(&d, dt)?;
                let l = psd_factor(&noise_gramian(&d, &self.model.c, dt)?);
                // raw increments are N(0, dt I); only the first d_X channels are used
                let mut noise = DMatrix::zeros(self.model.dx(), self.model.dw());
                noise
                    .view_mut((0, 0), (self.model.dx(), self.model.dx()))
                    .copy_from(&(l / dt.sqrt()));
                (phi, noise)
            }
            Scheme::EulerMaruyama => {
                let n = d.nrows();
                (DMatrix::identity(n, n) + d * dt, self.model.c.clone())
            }
        };
        self.cache = Some(StepCache {
            gain,
            phi,
            noise,
            k,
        });
        Ok(())
    }

    /// Applies `gains[gain]` on steps `position()..until` (clamped to the path).
    pub fn advance(&mut self, gain: usize, until: usize) -> Result<()> {
        if gain >= self.log.gains.len() {
            return Err(Error::Value(format!("unknown gain index {gain}")));
        }
        let until = until.min(self.path.steps());
        self.prepare(gain)?;
        let cache = self.cache.as_ref().expect("prepared");
        let dt = self.path.dt;
        for step in self.position()..until {
            let x = self.log.states.column(step).into_owned();
            let u = &cache.k * &x;
            let running = self.log.cost_integral[step]
                + (quad(&self.cost.q, x.as_slice()) + quad(&self.cost.r, u.as_slice())) * dt;
            let next = &cache.phi * &x + &cache.noise * self.path.increments.column(step);
            if !next.iter().all(|v| v.is_finite() && v.abs() < 1e150) || !running.is_finite() {
                return Err(Error::Explosion {
                    time: (step + 1) as f64 * dt,
                });
            }
            self.log.actions.set_column(step, &u);
            self.log.states.set_column(step + 1, &next);
            self.log.cost_integral.push(running);
            self.log.gain_index.push(gain);
        }
        Ok(())
    }

    /// Completes the final action with the last gain and returns the log.
    pub fn finish(mut self) -> TrajectoryLog {
        let n = self.position();
        if let Some(&g) = self.log.gain_index.last() {
            let u = &self.log.gains[g] * self.log.states.column(n);
            self.log.actions.set_column(n, &u);
        }
        // truncate unused tail if the run stopped early
        if n < self.path.steps() {
            self.log.times.truncate(n + 1);
            self.log.states = self.log.states.columns(0, n + 1).into_owned();
            self.log.actions = self.log.actions.columns(0, n + 1).into_owned();
        }
        self.log
    }
}

/// Piecewise-constant gain schedule: `gains[i]` applies from `starts[i]`.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    pub starts: Vec<f64>,
    pub gains: Vec<DMatrix<f64>>,
}

impl GainSchedule {
    pub fn constant(k: DMatrix<f64>) -> Self {
        Self {
            starts: alloc::vec![0.0],
            gains: alloc::vec![k],
        }
    }
}

pub fn simulate(
    model: &DynamicsModel,
    cost: &CostSpec,
    schedule: &GainSchedule,
    x0: &DVector<f64>,
    path: &BrownianPath,
    scheme: Scheme,
) -> Result<TrajectoryLog> {
    if schedule.gains.is_empty() || schedule.starts.len() != schedule.gains.len() {
        return Err(Error::Value("gain schedule is empty or ragged".into()));
    }
    if schedule.starts[0] > 0.0 || schedule.starts.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Value(
            "gain schedule must start at 0 with nondecreasing times".into(),
        ));
    }
    let mut sim = Simulator::new(model, cost, x0, path, scheme)?;
    for k in &schedule.gains {
        sim.add_gain(k.clone())?;
    }
    for i in 0..schedule.gains.len() {
        let end = schedule
            .starts
            .get(i + 1)
            .map_or(path.steps(), |&t| snap_up(t, path.dt));
        sim.advance(i, end)?;
    }
    Ok(sim.finish())
}

/// `(t1 − t0)⁻¹ ∫_{t0}^{t1} X Xᵀ dt`, left-endpoint rule on the log's grid.
pub fn empirical_covariance(log: &TrajectoryLog, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
    let k0 = snap_up(t0, log.dt);
    let k1 = snap_up(t1, log.dt).min(log.steps());
    if !(t1 > t0) || k1 <= k0 {
        return Err(Error::Value(format!("empty window [{t0}, {t1}]")));
    }
    let n = log.states.nrows();
    let mut acc = DMatrix::zeros(n, n);
    for k in k0..k1 {
        let x = log.states.column(k);
        acc.ger(1.0, &x, &x, 1.0);
    }
    Ok(acc / (k1 - k0) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn unit_cost(n: usize, m: usize) -> CostSpec {
        CostSpec::new(DMatrix::identity(n, n), DMatrix::identity(m, m)).unwrap()
    }

    #[test]
    fn path_count_and_determinism() {
        let p = make_path(7, 1.0, 0.5, 1).unwrap();
        assert_eq!(p.steps(), 2);
        assert_eq!(make_path(7, 1.0, 0.01, 3).unwrap().steps(), 100);
        assert_eq!(
            make_path(3, 5.0, 0.1, 2).unwrap(),
            make_path(3, 5.0, 0.1, 2).unwrap()
        );
        assert_ne!(
            make_path(3, 5.0, 0.1, 2).unwrap(),
            make_path(4, 5.0, 0.1, 2).unwrap()
        );
        assert!(make_path(1, 1.0, 0.0, 1).is_err());
        assert!(make_path(1, 0.001, 0.01, 1).is_err());
    }

    #[test]
    fn path_variance() {
        let p = make_path(11, 1e4, 0.01, 1).unwrap();
        let n = p.steps() as f64;
        let var = p.increments.iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var / 0.01 - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn deterministic_decay() {
        let model = DynamicsModel::new(
            -DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let path = make_path(0, 3.0, 0.1, 2).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let log = simulate(
            &model,
            &unit_cost(2, 1),
            &GainSchedule::constant(DMatrix::zeros(1, 2)),
            &x0,
            &path,
            Scheme::Exact,
        )
        .unwrap();
        for (k, &t) in log.times.iter().enumerate() {
            assert!((log.states[(0, k)] - (-t).exp()).abs() < 1e-12);
            assert_eq!(log.states[(1, k)], 0.0);
        }
    }

    #[test]
    fn rest_state() {
        let model = DynamicsModel::new(dmatrix![0.5], dmatrix![1.0], dmatrix![0.0]).unwrap();
        let path = make_path(0, 1.0, 0.01, 1).unwrap();
        let log = simulate(
            &model,
            &unit_cost(1, 1),
            &GainSchedule::constant(dmatrix![-1.0]),
            &DVector::zeros(1),
            &path,
            Scheme::Exact,
        )
        .unwrap();
        assert!(log.states.iter().all(|&v| v == 0.0));
        assert_eq!(*log.cost_integral.last().unwrap(), 0.0);
    }

    #[test]
    fn gain_switch_snaps_up() {
        let model = DynamicsModel::new(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
        let path = make_path(0, 1.0, 0.1, 1).unwrap();
        let sched = GainSchedule {
            starts: vec![0.0, 0.25],
            gains: vec![dmatrix![-1.0], dmatrix![-2.0]],
        };
        let log = simulate(
            &model,
            &unit_cost(1, 1),
            &sched,
            &DVector::from_element(1, 1.0),
            &path,
            Scheme::Exact,
        )
        .unwrap();
        assert_eq!(log.gain_index, vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 1]);
        for k in 0..=log.steps() {
            let g = log.gains[log.gain_index[k.min(log.steps() - 1)]][(0, 0)];
            assert_eq!(log.actions[(0, k)], g * log.states[(0, k)]);
        }
    }

    #[test]
    fn explosion_reported() {
        let model = DynamicsModel::new(dmatrix![400.0], dmatrix![0.0], dmatrix![1.0]).unwrap();
        let path = make_path(0, 10.0, 0.1, 1).unwrap();
        let r = simulate(
            &model,
            &unit_cost(1, 1),
            &GainSchedule::constant(dmatrix![0.0]),
            &DVector::from_element(1, 1.0),
            &path,
            Scheme::EulerMaruyama,
        );
        assert!(matches!(r, Err(Error::Explosion { .. })));
    }

    #[test]
    fn exact_scheme_needs_full_noise_rank() {
        let model = DynamicsModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let path = make_path(0, 1.0, 0.1, 1).unwrap();
        let x0 = DVector::zeros(2);
        assert!(matches!(
            Simulator::new(&model, &unit_cost(2, 1), &x0, &path, Scheme::Exact),
            Err(Error::Dimension(_))
        ));
        assert!(
            Simulator::new(&model, &unit_cost(2, 1), &x0, &path, Scheme::EulerMaruyama).is_ok()
        );
    }

    #[test]
    fn covariance_of_constant_and_window_errors() {
        let model = DynamicsModel::new(dmatrix![0.0], dmatrix![0.0], dmatrix![0.0]).unwrap();
        let path = make_path(0, 2.0, 0.1, 1).unwrap();
        let log = simulate(
            &model,
            &unit_cost(1, 1),
            &GainSchedule::constant(dmatrix![0.0]),
            &DVector::from_element(1, 3.0),
            &path,
            Scheme::Exact,
        )
        .unwrap();
        let cov = empirical_covariance(&log, 0.5, 1.5).unwrap();
        assert!((cov[(0, 0)] - 9.0).abs() < 1e-12);
        assert!(empirical_covariance(&log, 1.0, 1.0).is_err());
    }
}
