pub mod config;
pub mod experiment;

pub use config::{ConfigError, EnvSource, ExperimentConfig, Settings};
pub use experiment::{run_experiment, ExperimentError, ExperimentOutput, Manifest};
