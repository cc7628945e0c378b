//! Batch front end: system-definition files and one subcommand per operation.

pub mod app;
pub mod json;
pub mod sysdef;

pub use app::{run, Cli, CliError};
pub use sysdef::{load_system, parse_system, SysDefError};
