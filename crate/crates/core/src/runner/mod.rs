//! Command-line plumbing: experiment files, protocol dispatch and reports.

mod config;
mod report;
mod run;

pub use config::{
    parse_config, parse_config_with, ConfigError, ExperimentConfig, OutputFormat, OutputSpec, Overrides, Protocol,
    SweepParam, SweepSpec,
};
pub use report::{Object, Report, Value, SCHEMA_VERSION};
pub use run::{resolve_protocol, run, TOOL, TOOL_VERSION};
