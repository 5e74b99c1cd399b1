//! Experiment runner for the teleportation-based OTOC simulator: config
//! files, figure presets, parallel time/mismatch sweeps and CSV output.

pub mod calib_io;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use presets::{Overrides, PresetName};
pub use runner::{compute, run_and_write, ExperimentOutput};
