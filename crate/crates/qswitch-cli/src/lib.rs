//! Batch runner for qswitch experiments: TOML configuration in human
//! units, seeded execution, versioned CSV results and a manifest that
//! reproduces the run.

pub mod config;
pub mod output;
pub mod runner;
pub mod schema;

pub use config::ExperimentConfig;
pub use runner::{output_dir, resolve, run, RunOutcome};
