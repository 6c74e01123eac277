//! Scenario configuration, experiment runner and report files for `cocycle-core`.

pub mod config;
pub mod experiments;
pub mod runner;
pub mod scenarios;
pub mod cli;
