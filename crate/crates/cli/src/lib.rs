//! Command-line workflows around `avitrack`: file ingestion, the
//! `simulate`, `track`, `estimate` and `evaluate` subcommands, and the
//! CSV/JSON artifacts they exchange.
//!
//! Coordinates are planar meters with a user-defined origin; projection from
//! geographic coordinates is left to upstream tooling.

// `!(x > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod files;

pub use commands::{run, Cli, Command, RunReport};
pub use error::{CliError, Result};
