//! Standard-library side of lyapgen: config files, the parallel pipeline,
//! verification reports and file exports.

pub mod cli;
pub mod config;
pub mod export;
pub mod pipeline;
pub mod verify;

pub use config::{builtin_config, ConfigError, Overrides, Resolved, SystemConfig};
pub use pipeline::{Analysis, PipelineError};
