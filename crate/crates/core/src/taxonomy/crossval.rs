use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotated::AnnotatedRule;
use super::classifier::{train_rule_classifier, RuleClassifierConfig, TaxonomyError};
use super::types::FineRuleType;
use crate::evalkit::metrics::BinaryCounts;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub fine_type: FineRuleType,
    pub k: usize,
    pub seed: u64,
    pub fold_macro_f1: Vec<f64>,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
}

/// Fold index for every example. Positives and negatives are shuffled
/// separately and dealt round-robin, so each fold gets ⌊n/k⌋ or ⌈n/k⌉ of
/// each class. Returns `None` when either class has fewer than `k` members.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Option<Vec<usize>> {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if k == 0 || pos.len() < k || neg.len() < k {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold = vec![0; labels.len()];
    for (rank, &i) in pos.iter().enumerate() {
        fold[i] = rank % k;
    }
    // continue the deal where positives stopped so fold sizes stay even
    for (rank, &i) in neg.iter().enumerate() {
        fold[i] = (rank + pos.len()) % k;
    }
    Some(fold)
}

/// Stratified k-fold macro F1 of the scorer for `fine_type`.
pub fn crossval_rule_classifier(
    fine_type: FineRuleType,
    rules: &[AnnotatedRule],
    k: usize,
    config: &RuleClassifierConfig,
    seed: u64,
) -> Result<CrossValReport, TaxonomyError> {
    let labels: Vec<bool> = rules.iter().map(|r| r.has(fine_type)).collect();
    let folds = stratified_folds(&labels, k, seed).ok_or_else(|| {
        let positives = labels.iter().filter(|&&l| l).count();
        TaxonomyError::Stratification {
            fine_type,
            k,
            positives,
            negatives: labels.len() - positives,
        }
    })?;
    let mut scores = Vec::with_capacity(k);
    for f in 0..k {
        let train: Vec<AnnotatedRule> = rules
            .iter()
            .zip(&folds)
            .filter(|(_, &g)| g != f)
            .map(|(r, _)| r.clone())
            .collect();
        let scorer = train_rule_classifier(fine_type, &train, config, seed.wrapping_add(f as u64))?;
        let (preds, gold): (Vec<bool>, Vec<bool>) = rules
            .iter()
            .zip(&folds)
            .filter(|(_, &g)| g == f)
            .map(|(r, _)| (scorer.score(&r.text()) >= config.threshold, r.has(fine_type)))
            .unzip();
        let counts = BinaryCounts::from_pairs(&preds, &gold).expect("aligned");
        scores.push(counts.macro_f1());
    }
    let mean = scores.iter().sum::<f64>() / k as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(CrossValReport {
        fine_type,
        k,
        seed,
        fold_macro_f1: scores,
        mean_macro_f1: mean,
        std_macro_f1: var.sqrt(),
    })
}
