//! Library side of the `vibench` command-line tool: configuration, the
//! experiment runner, trace summaries and plot data.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod summary;

pub use cli::run_cli;
pub use error::{CliError, Result};
