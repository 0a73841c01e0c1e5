//! Community-norm violation detection: corpus construction from moderation
//! traces, rule-type taxonomy, per-type detectors, a rule-conditioned
//! explainer and the evaluation kit.

pub mod corpus;
pub mod detector;
pub mod evalkit;
pub mod explainer;
pub mod nn;
pub mod synth;
pub mod taxonomy;
