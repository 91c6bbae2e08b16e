//! Command-line workflow for shape-constrained kernel regression: a JSON run
//! configuration, CSV data in and out, model files with provenance checksums.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod fit;
pub mod model;

pub use error::{CliError, CliResult};
