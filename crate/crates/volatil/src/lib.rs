//! Command-line companion to `volatil-core`: CSV and JSON input/output,
//! console progress, worker pools for rolling evaluation and multiple
//! chains, and the `volatil` subcommands.

pub mod cli;
pub mod error;
pub mod export;
pub mod io;
pub mod observer;
pub mod parallel;

pub use cli::{run, Cli};
pub use error::{CliError, CliResult};
