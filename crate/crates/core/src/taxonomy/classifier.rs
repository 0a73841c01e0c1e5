use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::annotated::AnnotatedRule;
use super::types::FineRuleType;
use crate::corpus::RuleBook;
use crate::nn::{
    fit, load_model, save_model, LabeledInput, ModelConfig, ModelManifest, PersistError,
    SequenceClassifier, TrainConfig, TrainError,
};

pub const MODEL_KIND: &str = "rule-type";

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("{fine_type}: need at least 2 positive and 2 negative rules, got {positives} and {negatives}")]
    InsufficientExamples {
        fine_type: FineRuleType,
        positives: usize,
        negatives: usize,
    },
    #[error("{fine_type}: {source}")]
    Train {
        fine_type: FineRuleType,
        source: TrainError,
    },
    #[error("{fine_type}: cannot stratify {positives} positives and {negatives} negatives into {k} folds")]
    Stratification {
        fine_type: FineRuleType,
        k: usize,
        positives: usize,
        negatives: usize,
    },
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("model directory is missing a scorer for {0}")]
    MissingScorer(FineRuleType),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleClassifierConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub threshold: f64,
}

impl Default for RuleClassifierConfig {
    fn default() -> Self {
        RuleClassifierConfig {
            model: ModelConfig::small(),
            train: TrainConfig {
                epochs: 20,
                batch_size: 16,
                ..TrainConfig::default()
            },
            threshold: 0.5,
        }
    }
}

/// Binary scorer for one fine rule type.
#[derive(Clone, Debug)]
pub struct RuleTypeScorer {
    pub fine_type: FineRuleType,
    pub model: SequenceClassifier,
    pub manifest: ModelManifest,
}

impl RuleTypeScorer {
    pub fn score(&self, rule_text: &str) -> f64 {
        let input = self.model.featurizer().encode(&[rule_text.to_string()]);
        self.model
            .predict(&input)
            .expect("single utterance input is always valid")
    }
}

pub fn slug(t: FineRuleType) -> String {
    t.name()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

fn labeled(rules: &[AnnotatedRule], t: FineRuleType, model: &SequenceClassifier) -> Vec<LabeledInput> {
    rules
        .iter()
        .map(|r| (model.featurizer().encode(&[r.text()]), r.has(t)))
        .collect()
}

/// Trains the binary scorer for `fine_type` for the configured number of
/// epochs, without early stopping.
pub fn train_rule_classifier(
    fine_type: FineRuleType,
    rules: &[AnnotatedRule],
    config: &RuleClassifierConfig,
    seed: u64,
) -> Result<RuleTypeScorer, TaxonomyError> {
    let positives = rules.iter().filter(|r| r.has(fine_type)).count();
    let negatives = rules.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(TaxonomyError::InsufficientExamples {
            fine_type,
            positives,
            negatives,
        });
    }
    let mut model = SequenceClassifier::new(&config.model, false, seed);
    let train = labeled(rules, fine_type, &model);
    let report = fit(&mut model, &train, &[], &config.train, seed)
        .map_err(|source| TaxonomyError::Train { fine_type, source })?;
    let counts = crate::nn::train::counts_at(&model, &train, config.threshold)
        .map_err(|e| TaxonomyError::Train {
            fine_type,
            source: e.into(),
        })?;
    let manifest = ModelManifest {
        kind: MODEL_KIND.to_string(),
        target: fine_type.name().to_string(),
        variant: None,
        seed,
        decision_threshold: config.threshold,
        encoder_checkpoint: config.model.encoder_checkpoint.clone(),
        with_context: false,
        model: config.model.clone(),
        train: config.train.clone(),
        metrics: BTreeMap::from([
            ("train_macro_f1".to_string(), counts.macro_f1()),
            ("epochs_run".to_string(), report.epochs_run as f64),
            ("positives".to_string(), positives as f64),
            ("negatives".to_string(), negatives as f64),
        ]),
        options: BTreeMap::new(),
    };
    Ok(RuleTypeScorer {
        fine_type,
        model,
        manifest,
    })
}

/// One scorer per fine rule type.
#[derive(Clone, Debug)]
pub struct RuleTypeModel {
    pub scorers: BTreeMap<FineRuleType, RuleTypeScorer>,
    pub threshold: f64,
}

impl RuleTypeModel {
    /// Trains all 21 scorers in parallel. Scorer `i` uses `seed + i`.
    pub fn train(
        rules: &[AnnotatedRule],
        config: &RuleClassifierConfig,
        seed: u64,
    ) -> Result<Self, TaxonomyError> {
        let scorers = FineRuleType::ALL
            .par_iter()
            .enumerate()
            .map(|(i, &t)| train_rule_classifier(t, rules, config, seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        info!(types = scorers.len(), "rule-type scorers trained");
        Ok(RuleTypeModel {
            scorers: scorers.into_iter().map(|s| (s.fine_type, s)).collect(),
            threshold: config.threshold,
        })
    }

    pub fn scores(&self, rule_text: &str) -> BTreeMap<FineRuleType, f64> {
        self.scorers
            .iter()
            .map(|(&t, s)| (t, s.score(rule_text)))
            .collect()
    }

    /// One sub-directory per fine type.
    pub fn save(&self, dir: &Path) -> Result<(), TaxonomyError> {
        for (t, s) in &self.scorers {
            save_model(&dir.join(slug(*t)), &s.manifest, &s.model)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, TaxonomyError> {
        let mut scorers = BTreeMap::new();
        let mut threshold = 0.5;
        for t in FineRuleType::ALL {
            let sub = dir.join(slug(t));
            if !sub.exists() {
                return Err(TaxonomyError::MissingScorer(t));
            }
            let (manifest, model) = load_model(&sub)?;
            threshold = manifest.decision_threshold;
            scorers.insert(
                t,
                RuleTypeScorer {
                    fine_type: t,
                    model,
                    manifest,
                },
            );
        }
        Ok(RuleTypeModel { scorers, threshold })
    }
}

/// Every fine type whose score reaches `threshold`. May be empty.
pub fn classify_rule(rule_text: &str, model: &RuleTypeModel, threshold: f64) -> BTreeSet<FineRuleType> {
    model
        .scores(rule_text)
        .into_iter()
        .filter(|(_, p)| *p >= threshold)
        .map(|(t, _)| t)
        .collect()
}

/// Labels every rule in `book` with the predicted fine types; coarse types
/// follow automatically.
pub fn map_rules(book: &mut RuleBook, model: &RuleTypeModel, threshold: f64) {
    let labels: Vec<BTreeSet<FineRuleType>> = book
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|r| classify_rule(&r.text(), model, threshold))
        .collect();
    for (rule, fine) in book.iter_mut().zip(labels) {
        rule.set_fine_types(fine);
    }
}
