//! Experiment runner for the `tvcs` reconstruction library: config parsing,
//! batch runs with CSV traces, and trace inspection.

pub mod config;
pub mod error;
pub mod experiment;
pub mod trace;

pub use config::{parse_config, ExperimentSpec, Input, Sensing, SolverChoice};
pub use error::{CliError, Result};
pub use experiment::{run_experiment, ExperimentReport, SummaryRow};
pub use trace::print_trace_summary;
