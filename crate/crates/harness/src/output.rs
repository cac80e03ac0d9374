use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{run_replicates, ExperimentResults, Setup};

pub const EPISODES_HEADER: [&str; 7] = [
    "replicate",
    "n",
    "tau_n",
    "psi_sq",
    "t_half_psi_sq",
    "sigma_n",
    "projected",
];
pub const REGRET_HEADER: [&str; 5] = ["replicate", "T", "R_T", "t_neg_half_R_T", "R_tilde_T"];
pub const DIAGNOSTICS_HEADER: [&str; 4] = ["replicate", "t", "self_normalized", "gram_lambda_min"];
pub const FAILURES_HEADER: [&str; 3] = ["replicate", "seed", "error"];

/// Shortest round-trip representation, so reruns compare byte for byte.
fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub episodes: PathBuf,
    pub regret: PathBuf,
    pub diagnostics: PathBuf,
    pub failures: PathBuf,
    pub metadata: PathBuf,
}

impl OutputFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            episodes: dir.join("episodes.csv"),
            regret: dir.join("regret.csv"),
            diagnostics: dir.join("diagnostics.csv"),
            failures: dir.join("failures.csv"),
            metadata: dir.join("metadata.txt"),
        }
    }
}

fn write_csv<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).with_context(ctx)?;
    w.write_record(header).with_context(ctx)?;
    for row in rows {
        w.write_record(&row).with_context(ctx)?;
    }
    w.flush().with_context(ctx)?;
    Ok(())
}

pub fn metadata(cfg: &ExperimentConfig, setup: &Setup, results: &ExperimentResults) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
    s.push_str(&cfg.to_toml());
    let (wr, we, wp) = setup.rates.map_or((f64::NAN, f64::NAN, f64::NAN), |r| {
        (r.omega_r, r.omega_e, r.omega_pi)
    });
    for (k, v) in [
        ("omega_R", wr),
        ("omega_E", we),
        ("omega_pi", wp),
        ("epsilon0", setup.epsilon0),
        ("delta0", setup.oracle.delta0),
        (
            "optimal_avg_cost",
            setup.solution.optimal_avg_cost.unwrap_or(f64::NAN),
        ),
        (
            "initial_estimate_error",
            setup.theta0.deviation(&setup.truth.params),
        ),
    ] {
        let _ = writeln!(s, "{k} = {}", num(v));
    }
    let _ = writeln!(s, "completed_replicates = {}", results.replicates.len());
    let _ = writeln!(s, "failed_replicates = {}", results.failures.len());
    s
}

pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    setup: &Setup,
    results: &ExperimentResults,
) -> Result<OutputFiles> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = OutputFiles::in_dir(dir);
    let reps = &results.replicates;
    write_csv(
        &files.episodes,
        EPISODES_HEADER,
        reps.iter().flat_map(|r| {
            r.episodes.iter().map(move |e| {
                [
                    r.replicate.to_string(),
                    e.n.to_string(),
                    num(e.tau),
                    num(e.psi_sq),
                    num(e.tau.sqrt() * e.psi_sq),
                    num(e.sigma),
                    u8::from(e.projected).to_string(),
                ]
            })
        }),
    )?;
    write_csv(
        &files.regret,
        REGRET_HEADER,
        reps.iter().flat_map(|r| {
            r.regret.iter().map(move |g| {
                [
                    r.replicate.to_string(),
                    num(g.t),
                    num(g.regret),
                    num(g.regret / g.t.sqrt()),
                    num(g.policy_diff),
                ]
            })
        }),
    )?;
    write_csv(
        &files.diagnostics,
        DIAGNOSTICS_HEADER,
        reps.iter().flat_map(|r| {
            r.diagnostics.iter().map(move |d| {
                [
                    r.replicate.to_string(),
                    num(d.t),
                    num(d.self_normalized),
                    num(d.gram_lambda_min),
                ]
            })
        }),
    )?;
    write_csv(
        &files.failures,
        FAILURES_HEADER,
        results
            .failures
            .iter()
            .map(|f| [f.replicate.to_string(), f.seed.to_string(), f.error.clone()]),
    )?;
    fs::write(&files.metadata, metadata(cfg, setup, results))
        .with_context(|| format!("writing {}", files.metadata.display()))?;
    Ok(files)
}

/// Runs every replicate and writes the CSVs and metadata under `cfg.output`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    workers: usize,
) -> Result<(ExperimentResults, OutputFiles)> {
    let setup = Setup::new(cfg)?;
    let results = run_replicates(cfg, &setup, workers)?;
    let files = write_outputs(&cfg.output, cfg, &setup, &results)?;
    Ok((results, files))
}
