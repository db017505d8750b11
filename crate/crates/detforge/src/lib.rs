//! Files, configuration and the command-line driver around
//! [`detforge_core`]: FCIDUMP and CSV/JSON formats, a strict JSON run
//! configuration, and one workflow function per subcommand.

pub mod config;
pub mod error;
pub mod io;
pub mod workflows;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
