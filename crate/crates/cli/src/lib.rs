//! Command-line front end of `heatsrc`: experiment presets, config-driven
//! synth/invert/shape-fit runs, and angle-gap tables.

pub mod config;
pub mod error;
pub mod run;

pub use config::{ExperimentConfig, Overrides, Preset};
pub use error::{CliError, CliResult};
