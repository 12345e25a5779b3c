//! Core algorithms for measuring how sensitive a model is to meaning-preserving
//! variations of its input.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It covers:
//!
//! - [`model`]: the instance / perturbation-group / dataset data model,
//! - [`perturb`]: seeded superficial edits, distraction passages and paraphrase attachment,
//! - [`scoring`]: binary scorers and per-group score vectors,
//! - [`metrics`]: performance drop rate and the (normalized) Cohen's h family,
//! - [`stats`]: group-level percentile bootstrap and Pearson correlation,
//! - [`report`]: aggregate rows, per-type breakdown and the PDR/NCoH comparison curve,
//! - [`prompt`]: zero-shot prompt templates.
//!
//! File formats, HTTP inference and the command line live in the `robeval` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
mod seed;

pub mod keyboard;
pub mod metrics;
pub mod model;
pub mod perturb;
pub mod prompt;
pub mod report;
pub mod scoring;
pub mod stats;

pub use error::{Error, Result};
pub use seed::{derive_seed, stable_hash};
