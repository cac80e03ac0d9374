use std::fs;

use ctrl_rl_harness::experiment::run_replicate;
use ctrl_rl_harness::{run_experiment, run_replicates, ExperimentConfig, ModeName, Setup};

fn quick(mode: ModeName, n: usize) -> ExperimentConfig {
    ExperimentConfig {
        mode,
        n_replicates: n,
        horizon: 60.0,
        regret_points: 8,
        ..ExperimentConfig::default()
    }
}

#[test]
fn optimal_mode_has_zero_regret() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        output: dir.path().into(),
        ..quick(ModeName::Optimal, 2)
    };
    run_experiment(&cfg, 1).unwrap();
    let text = fs::read_to_string(dir.path().join("regret.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(&cols[2..], ["0.0", "0.0", "0.0"], "{line}");
        rows += 1;
    }
    assert_eq!(rows, 2 * 8);
}

#[test]
fn episode_rows_follow_the_schedule() {
    let cfg = ExperimentConfig {
        n_replicates: 2,
        regret_points: 4,
        ..ExperimentConfig::default()
    };
    let setup = Setup::new(&cfg).unwrap();
    let res = run_replicates(&cfg, &setup, 2).unwrap();
    assert!(res.failures.is_empty());
    let rows: usize = res.replicates.iter().map(|r| r.episodes.len()).sum();
    assert_eq!(rows, 2 * 35);
}

#[test]
fn outputs_are_byte_identical_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = quick(ModeName::Randomized, 3);
    run_experiment(
        &ExperimentConfig {
            output: a.path().into(),
            ..cfg.clone()
        },
        1,
    )
    .unwrap();
    run_experiment(
        &ExperimentConfig {
            output: b.path().into(),
            ..cfg
        },
        3,
    )
    .unwrap();
    for f in [
        "episodes.csv",
        "regret.csv",
        "diagnostics.csv",
        "failures.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn replicates_do_not_depend_on_the_replicate_count() {
    let small = quick(ModeName::Randomized, 1);
    let large = quick(ModeName::Randomized, 4);
    let r_small = run_replicate(&small, &Setup::new(&small).unwrap(), 0).unwrap();
    let r_large = run_replicates(&large, &Setup::new(&large).unwrap(), 2).unwrap();
    assert_eq!(r_small, r_large.replicates[0]);
}

#[test]
fn explosions_become_failure_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(
        "a = [[1.0]]\nb = [[1.0]]\nc = [[1.0]]\nq_scale = 1.0\nmode = \"fixed-gain\"\n\
         fixed_gain_scale = 0.0\nn_replicates = 2\nregret_points = 4\n",
    )
    .unwrap();
    let cfg = ExperimentConfig {
        output: dir.path().into(),
        ..cfg
    };
    let (res, files) = run_experiment(&cfg, 1).unwrap();
    assert!(res.replicates.is_empty());
    assert_eq!(res.failures.len(), 2);
    let text = fs::read_to_string(files.failures).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("exploded"));
}

#[test]
fn unwritable_output_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = ExperimentConfig {
        output: blocker.join("out"),
        ..quick(ModeName::Optimal, 1)
    };
    let err = format!("{:#}", run_experiment(&cfg, 1).unwrap_err());
    assert!(err.contains("file/out"), "{err}");
}

#[test]
fn metadata_echoes_config_and_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        output: dir.path().into(),
        ..quick(ModeName::Optimal, 1)
    };
    let (_, files) = run_experiment(&cfg, 1).unwrap();
    let text = fs::read_to_string(files.metadata).unwrap();
    for key in [
        "version = ",
        "gamma = 1.2",
        "horizon = 60.0",
        "omega_R = ",
        "omega_E = ",
        "omega_pi = ",
    ] {
        assert!(text.contains(key), "missing {key}");
    }
}
