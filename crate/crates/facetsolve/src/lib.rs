//! Configuration, file formats and subcommands of the `facetsolve` runner.
//!
//! The numerical work lives in [`facetsolve_core`]; this crate turns a JSON
//! experiment description into solves, verification reports and sweep
//! tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod csv_io;

pub use commands::{run, run_loaded, Command, Outcome};
pub use config::{ConfigError, ExperimentConfig, LoadedConfig};
