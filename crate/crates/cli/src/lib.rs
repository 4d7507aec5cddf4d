//! Command-line front end: file formats, run manifests, reports and plots
//! around `spikeid-core`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod svg;

pub use commands::{run, rerun, RunOutcome};
pub use config::{Command, Manifest, RunConfig};
pub use error::CliError;
