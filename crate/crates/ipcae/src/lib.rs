//! File formats and command line for `ipcae-core`: dataset CSVs, JSON run
//! configs, binary checkpoints, metric logs and the `ipcae` binary.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod report;

pub use error::{Error, Result};
