//! Command-line pipeline: synthesis, selection, pretraining, training,
//! ablation, attribution and reporting.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{exit_code, run, Cli, Command};
pub use config::{Overrides, PipelineConfig};
pub use output::{RunManifest, RUN_MANIFEST};
