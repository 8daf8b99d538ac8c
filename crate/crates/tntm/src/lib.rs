//! File formats, snapshots, run configuration, reports and the command line
//! around [`tntm_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod run;
pub mod snapshot;

pub use error::{CliError, Result};
