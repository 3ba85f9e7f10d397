//! Experiment sweeps driven by a config file, with CSV output.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, ProblemSpec, RankGrid, OUTPUT_ENV};
pub use report::{CellStatus, ColumnKind, ExperimentReport, Row};
pub use run::{run_approx_experiment, run_precond_experiment, write_spectrum};
