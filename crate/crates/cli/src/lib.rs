//! Config-driven driver for IS-AL fragility studies: pool generation, replicated studies and
//! figure-data reports, all reproducible from (config, seed).

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{preset, CaseConfig, StudyConfig, PRESETS};
pub use error::{Category, CliError};

/// Environment variable overriding the output root (and nothing else).
pub const OUT_ENV: &str = "ISAL_OUT";
