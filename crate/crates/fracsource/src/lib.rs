//! Command-line experiments for `fracsource-core`: configuration, file
//! formats, seeded noise, the verification suite and the subcommands.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod noise;
pub mod par;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::CliError;
