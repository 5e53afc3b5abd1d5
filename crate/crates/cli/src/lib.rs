//! Configuration loading and experiment pipelines for the `echolab` binary.

pub mod config;
pub mod run;

pub use config::{parse, validate, Diagnostic, Experiment, ExperimentConfig};
pub use run::{run, RunReport};
