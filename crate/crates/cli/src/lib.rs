//! The `recbench` command line: dataset preparation, training runs, grid
//! benchmarks over a run store, and GRMF-X report tables.
//!
//! Exit codes are 0 on success, 1 on runtime failure and 2 on usage errors.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod manifest;
pub mod plan;
pub mod report;
pub mod runner;

pub use error::{CliError, CliResult};
