//! Experiment plumbing around `rbai-core`: the JSON experiment file, the
//! parallel trial harness, reports and the `rbai` command line.

pub mod config;
pub mod error;
pub mod harness;
pub mod report;

pub use error::{CliError, Result};
