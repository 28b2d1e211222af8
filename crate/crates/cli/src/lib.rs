//! Pipeline commands and the annotation HTTP API behind the `gazemap` binary.

pub mod commands;
pub mod server;

pub use commands::{exit_code, MissingInput};
