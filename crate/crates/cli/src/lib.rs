//! Configuration, orchestration and persistence for the `interwave` binary.

pub mod config;
pub mod output;
pub mod run;
pub mod validate;

pub use config::{load_config, ConfigError, RunConfig};
pub use run::{run_continue, run_single, RunError, RunOutcome, EXIT_CONFIG, EXIT_GUARD, EXIT_NUMERICAL, EXIT_OK};
