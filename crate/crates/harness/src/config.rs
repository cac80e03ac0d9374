use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctrl_rl_core::policy::Mode;
use ctrl_rl_core::sde::Scheme;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Randomized,
    Persistent,
    Optimal,
    FixedGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Exact,
    EulerMaruyama,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Exact => Scheme::Exact,
            SchemeName::EulerMaruyama => Scheme::EulerMaruyama,
        }
    }
}

/// One experiment. Every key is top level so a config file stays a flat
/// key/value document; inline matrices are arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Named model; ignored when `a`, `b` and `c` are all given.
    pub preset: String,
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<Vec<f64>>>,
    /// `Q = q_scale · I`
    pub q_scale: f64,
    /// `R = r_scale · I`
    pub r_scale: f64,
    pub gamma: f64,
    pub sigma0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_replicates: usize,
    pub base_seed: u64,
    pub mode: ModeName,
    pub scheme: SchemeName,
    /// `δ₀` as a fraction of the true closed loop's decay rate.
    pub delta0_fraction: f64,
    /// Size of the initial estimate's offset from the truth, as a fraction
    /// of `ε₀`. The offset estimate also anchors the oracle.
    pub anchor_scale: f64,
    /// Fixed-gain mode deploys `fixed_gain_scale · K★`.
    pub fixed_gain_scale: f64,
    /// Points on the logarithmic grid of regret horizons.
    pub regret_points: usize,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "x29a".into(),
            a: None,
            b: None,
            c: None,
            q_scale: 10.0,
            r_scale: 1.0,
            gamma: 1.2,
            sigma0: 1.0,
            horizon: 500.0,
            dt: 0.01,
            n_replicates: 20,
            base_seed: 1,
            mode: ModeName::Randomized,
            scheme: SchemeName::Exact,
            delta0_fraction: 0.5,
            anchor_scale: 0.5,
            fixed_gain_scale: 1.5,
            regret_points: 40,
            output: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= 1.0) {
            bail!("horizon must be at least 1, got {}", self.horizon);
        }
        if !(self.dt > 0.0) || self.dt > self.horizon {
            bail!("dt must lie in (0, horizon], got {}", self.dt);
        }
        if self.n_replicates == 0 {
            bail!("n_replicates must be at least 1");
        }
        if !(self.gamma > 1.0) {
            bail!("gamma must exceed 1, got {}", self.gamma);
        }
        if !(self.sigma0 >= 0.0) {
            bail!("sigma0 must be nonnegative, got {}", self.sigma0);
        }
        if !(self.q_scale > 0.0) || !(self.r_scale > 0.0) {
            bail!("q_scale and r_scale must be positive");
        }
        if !(self.delta0_fraction > 0.0 && self.delta0_fraction < 1.0) {
            bail!(
                "delta0_fraction must lie in (0, 1), got {}",
                self.delta0_fraction
            );
        }
        if !(self.anchor_scale >= 0.0 && self.anchor_scale <= 1.0) {
            bail!("anchor_scale must lie in [0, 1], got {}", self.anchor_scale);
        }
        if self.regret_points == 0 {
            bail!("regret_points must be at least 1");
        }
        let inline = [&self.a, &self.b, &self.c]
            .iter()
            .filter(|m| m.is_some())
            .count();
        if inline != 0 && inline != 3 {
            bail!("inline models need all of a, b and c");
        }
        Ok(())
    }

    pub fn core_mode(&self, k_star: &DMatrix<f64>) -> Mode {
        match self.mode {
            ModeName::Randomized => Mode::Randomized,
            ModeName::Persistent => Mode::Persistent,
            ModeName::Optimal => Mode::Optimal,
            ModeName::FixedGain => Mode::FixedGain(k_star * self.fixed_gain_scale),
        }
    }
}

/// Rows-of-rows to a matrix; ragged or empty input is an error.
pub fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        bail!("matrix {name} must be a non-empty rectangular array of rows");
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
