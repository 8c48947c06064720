//! Scenario runner behind the `pairwell` command.

pub mod compare;
pub mod config;
pub mod output;
pub mod scenario;

pub use scenario::{run_config_file, run_scenario, RunError};
