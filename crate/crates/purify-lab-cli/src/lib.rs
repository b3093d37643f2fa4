//! Command-line frontend for the purify-lab toolkit.
//!
//! Exposes the run configuration, report formatting, and subcommand runners
//! so integration tests can drive the same code paths as the binary.

pub mod config;
pub mod report;
pub mod run;

pub use config::{RunConfig, DEFAULT_SEED};
pub use run::{run, RunOutcome};
