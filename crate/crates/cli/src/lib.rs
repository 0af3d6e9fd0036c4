//! Experiment harness for AMP and its state evolution: configuration,
//! seeded parallel trials, CSV/JSON/SVG output and an oracle self-check.

pub mod config;
pub mod output;
pub mod plot;
pub mod runner;
pub mod verify;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use output::{write_outputs, OutputError};
pub use runner::{run_experiment, run_sweep, Execution, ExperimentReport, RunError};
