//! Conditional slate optimization: re-rank a scored candidate list into a
//! slate of `k` items that is both relevant (nDCG@k) and close to per-query
//! categorical distribution targets (GAP).
//!
//! The crate holds the pointer-network re-ranker and its reinforcement and
//! supervised training, the greedy MMR-style baseline, the cascade click
//! simulation used to build evaluation data, and the file formats and
//! experiment plumbing around them.

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod mmr;
pub mod model;
pub mod nn;
pub mod simulate;
pub mod training;

pub use error::{Error, Result};
