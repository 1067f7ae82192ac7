//! Library half of the `nrdf` command-line tool: config parsing, the config
//! hash shared with the SDP oracle, and the subcommand bodies.

pub mod bench;
pub mod commands;
pub mod config;
pub mod crosscheck;
pub mod error;

pub use config::{config_hash, parse_config, parse_config_str, Overrides, RunConfig, Solver};
pub use error::{CliError, Result};
