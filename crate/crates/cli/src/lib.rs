//! Batch front end: read a JSON run configuration, evaluate branches and
//! real states over a set of horizons, and write JSON/CSV results.

// Comparisons are written as `!(x < y)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;

pub use config::{ConfigError, RunConfig};
pub use pipeline::{run_file, run_text, validate_file, RunError, RunOptions, RunSummary};
