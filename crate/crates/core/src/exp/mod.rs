//! Experiment harness: declarative configs, the round runner, metrics
//! emission, and sweep comparison.

pub mod compare;
pub mod config;
pub mod metrics;
pub mod runner;

pub use compare::{compare_runs, CompareRow, CompareTable};
pub use config::ExperimentConfig;
pub use metrics::{to_csv, to_json, write_metrics, OutputFormat, RoundMetrics};
pub use runner::run_experiment;
