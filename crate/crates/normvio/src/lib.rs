//! Toolkit for detecting community-norm violations in threaded discussions.
//!
//! Re-exports the modelling library and the triage service, and adds the
//! pipeline configuration and the `normvio` command line that chains corpus
//! construction, rule typing, detector and explainer training, evaluation
//! and serving.

pub mod cli;
pub mod config;
pub mod manifest;

pub use normvio_core::{corpus, detector, evalkit, explainer, nn, synth, taxonomy};
pub use normvio_service as service;

pub use config::{PipelineConfig, PipelineConfigError};
pub use manifest::{RunManifest, RunRecorder};
