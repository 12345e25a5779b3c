//! File formats, HTTP inference, report rendering and the command line for
//! robustness evaluation. The algorithms live in `robeval-core`.

pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod inference;
pub mod io;
pub mod pipeline;
pub mod render;

pub use error::{Error, Result};
pub use robeval_core as core;
