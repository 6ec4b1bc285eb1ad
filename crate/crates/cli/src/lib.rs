//! Command-line front end: file formats and the pipeline subcommands.

pub mod commands;
pub mod error;
pub mod io;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
