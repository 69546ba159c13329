//! Experiment configuration, ensemble statistics, and report files.

pub mod config;
pub mod experiment;
pub mod stats;

pub use config::{ExperimentConfig, ExperimentKind, Preset};
pub use experiment::{run_experiment, Check, ExperimentReport, Table};
pub use stats::{compare_distributions, Comparison, EnsembleStats};
