//! Experiment runner for label-mapping class-incremental learning:
//! scenario configs, deterministic execution, and machine-readable
//! reports. See the `lmrc` binary for the CLI surface.

pub mod commands;
pub mod config;
pub mod report;
pub mod runner;
