//! File formats, configuration and the pipeline runner for the `dspn` tool.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod run;

pub use error::{DspnError, Result};
