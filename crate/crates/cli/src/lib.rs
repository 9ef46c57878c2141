//! Batch front end: JSON run configs, the named scenarios and their CSV/PGM outputs.

pub mod cases;
pub mod config;
pub mod error;
pub mod output;

pub use cases::{run_case, run_case_with_threads, CaseReport, CheckOutcome};
pub use config::{emit_config, parse_config, CaseKind, RunConfig};
pub use error::{CliError, ConfigError, Result};
