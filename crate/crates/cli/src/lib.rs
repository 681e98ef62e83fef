//! Library side of the `veridl` binary: configuration, CSV datasets,
//! artifact files, the wire framing of the socket demo, and the work behind
//! each subcommand.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod demo;
pub mod error;
pub mod wire;

pub use config::RunConfig;
pub use error::{exit, CliError};
