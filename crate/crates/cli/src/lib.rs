//! Command-line front end for `emech-core`.
//!
//! Every command reads an optional JSON config, evaluates on the requested
//! grids and writes one table as CSV (with `#` metadata lines) or JSON.
//! Identical inputs and seed give byte-identical output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod output;
pub mod scenario;
pub mod spec;
pub mod synth;

pub use error::CliError;
pub use scenario::{execute, run_scenario};
pub use spec::{GridSpec, ScenarioSpec};
