use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ctrl_rl_core::margin::{epsilon0, stability_margin};
use ctrl_rl_core::riccati::{care_solve, CareOptions};
use ctrl_rl_harness::preset::build_model;
use ctrl_rl_harness::{run_experiment, ExperimentConfig, ModeName};

#[derive(Parser)]
#[command(
    name = "ctrl-rl",
    version,
    about = "Randomized-estimates control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Config file (flat TOML keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named model, overriding the config's.
    #[arg(long)]
    preset: Option<String>,
}

impl ModelArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.preset {
            cfg.preset = p.clone();
            cfg.a = None;
            cfg.b = None;
            cfg.c = None;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded replicates and write CSVs.
    Run {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        mode: Option<ModeName>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Base seed; replicate r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Print the Riccati solution, optimal gain and residual.
    SolveCare {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print the stability-margin certificate of the truth and ε₀.
    Margin {
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn print_matrix(name: &str, m: &nalgebra::DMatrix<f64>) {
    println!("{name} =");
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:12.6}")).collect();
        println!("  {}", cells.join(" "));
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            model,
            mode,
            replicates,
            seed,
            out,
            workers,
        } => {
            let mut cfg = model.load()?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(n) = replicates {
                cfg.n_replicates = n;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            cfg.validate()?;
            let (results, files) = run_experiment(&cfg, workers)?;
            println!(
                "{} replicates completed, {} failed; wrote {} and {}",
                results.replicates.len(),
                results.failures.len(),
                files.episodes.display(),
                files.regret.display()
            );
        }
        Command::SolveCare { model } => {
            let cfg = model.load()?;
            let (truth, cost) = build_model(&cfg)?;
            let sol = care_solve(&truth, &cost, &CareOptions::default())?;
            print_matrix("P", &sol.p);
            print_matrix("K", &sol.k);
            println!("residual = {:e}", sol.residual);
            if let Some(j) = sol.optimal_avg_cost {
                println!("optimal average cost = {j:.6}");
            }
        }
        Command::Margin { model } => {
            let cfg = model.load()?;
            let (truth, cost) = build_model(&cfg)?;
            let sol = care_solve(&truth, &cost, &CareOptions::default())?;
            let rho = -ctrl_rl_core::matspec::spectral_abscissa(&sol.d)?;
            let cert = stability_margin(&truth.params, &cost, cfg.delta0_fraction * rho)?;
            println!("rho = {:.6}", cert.rho);
            println!("zeta = {:.6}", cert.zeta);
            println!("m = {}", cert.m_hat);
            println!("similarity cond = {:.6}", cert.similarity_cond);
            println!("delta = {:.6}", cert.delta);
            println!("radius = {:.6e}", cert.radius);
            println!("epsilon0 = {:.6e}", epsilon0(&truth, &cost)?);
        }
    }
    Ok(())
}
