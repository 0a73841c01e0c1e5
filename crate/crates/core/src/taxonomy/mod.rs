//! Fine and coarse rule types, and the per-type rule classifiers that map
//! community rule texts onto them.

pub mod annotated;
pub mod classifier;
pub mod crossval;
pub mod types;

pub use annotated::{builtin_catalog, read_annotated, write_annotated, AnnotatedRule, AnnotationError};
pub use classifier::{
    classify_rule, map_rules, train_rule_classifier, RuleClassifierConfig, RuleTypeModel,
    RuleTypeScorer, TaxonomyError,
};
pub use crossval::{crossval_rule_classifier, stratified_folds, CrossValReport};
pub use types::*;
