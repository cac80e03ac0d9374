//! Experiment orchestration for `ctrl-rl-core`: configuration, the X-29A
//! preset, seeded parallel replicates and CSV output.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod output;
pub mod preset;

pub use config::{ExperimentConfig, ModeName, SchemeName};
pub use experiment::{run_replicate, run_replicates, ExperimentResults, ReplicateResult, Setup};
pub use output::{run_experiment, write_outputs, OutputFiles};
pub use preset::x29a_preset;
