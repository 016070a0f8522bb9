//! File formats, provenance, experiment orchestration and the command-line
//! interface on top of `lvvc-core`.

pub mod circuit_io;
pub mod cli;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod fsio;
pub mod meta;
pub mod model_io;
pub mod parallel;
pub mod pipeline;
pub mod results;
pub mod svg;
pub mod timeseries;

pub use error::{Error, ExitClass, Result};
