//! Operational surface: file formats, the stand-in base ranker, synthetic
//! data, experiment configuration, reports and the steps that tie them
//! together.

pub mod base_ranker;
pub mod config;
pub mod desk;
pub mod letor;
pub mod pipeline;
pub mod report;
pub mod sidecar;
pub mod synthetic;
pub mod verify;

pub use base_ranker::LinearScorer;
pub use config::ExperimentConfig;
pub use letor::{parse_letor, parse_letor_str, write_letor, write_raw_letor};
pub use sidecar::{parse_sidecar, parse_sidecar_str, write_sidecar, Sidecar};
