//! Configuration loading and experiment orchestration behind the `cccb` binary.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig, PolicySpec};
pub use run::{cmd_run, RunOptions, RunSummary};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const PROBE_FAILURE: u8 = 1;
    pub const CONFIG_ERROR: u8 = 2;
    pub const RUNTIME_ABORT: u8 = 3;
}
