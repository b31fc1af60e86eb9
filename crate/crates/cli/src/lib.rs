//! Experiment driver: JSON configuration, seeded pipelines and result files.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
