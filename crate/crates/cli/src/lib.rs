//! Batch front end of `resetdf`: TOML configs in, CSV/JSON files out.
//!
//! Each command writes its outputs plus a `manifest.json` recording the
//! fully resolved parameters.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod suite;

pub use error::CliError;
