//! Rule-text-conditioned violation model: one classifier scoring
//! (conversation, rule) pairs for every community.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::corpus::{CommunityRule, Conversation, DatasetEntry, RuleBook};
use crate::detector::community_token;
use crate::evalkit::{pair_example_id, PredictionRecord, PAIR_TARGET};
use crate::nn::train::counts_at;
use crate::nn::{
    fit, load_model, save_model, FitReport, LabeledInput, ModelConfig, ModelError, ModelManifest,
    PersistError, SequenceClassifier, TrainConfig, TrainError, SEPARATOR,
};

pub const MODEL_KIND: &str = "explainer";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairProvenance {
    ObservedPositive,
    UnmoderatedNegative,
    MismatchedRuleNegative,
    AugmentedEvalNegative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulePairExample {
    pub conversation: Conversation,
    pub rule: CommunityRule,
    pub label: bool,
    pub provenance: PairProvenance,
}

impl RulePairExample {
    pub fn example_id(&self) -> String {
        pair_example_id(
            &self.conversation.final_comment.comment_id,
            &self.rule.subreddit,
            self.rule.rule_index,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplainerVariant {
    Rule,
    RuleHistory,
    RuleHistoryCommunity,
}

impl ExplainerVariant {
    pub const ALL: [ExplainerVariant; 3] = [
        ExplainerVariant::Rule,
        ExplainerVariant::RuleHistory,
        ExplainerVariant::RuleHistoryCommunity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExplainerVariant::Rule => "rule",
            ExplainerVariant::RuleHistory => "rule-history",
            ExplainerVariant::RuleHistoryCommunity => "rule-history-community",
        }
    }

    pub fn uses_history(self) -> bool {
        self != ExplainerVariant::Rule
    }
}

impl fmt::Display for ExplainerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown explainer variant `{0}`; expected rule, rule-history or rule-history-community")]
pub struct UnknownExplainerVariant(pub String);

impl FromStr for ExplainerVariant {
    type Err = UnknownExplainerVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().trim_start_matches('+').to_ascii_lowercase().replace(['_', '+', ' '], "-");
        ExplainerVariant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| UnknownExplainerVariant(s.to_string()))
    }
}

/// Utterances for a pair input. The rule text rides with the final comment
/// after the separator; earlier utterances go through the context encoder.
pub fn build_pair_input(conversation: &Conversation, rule: &CommunityRule, variant: ExplainerVariant) -> Vec<String> {
    let mut final_text = conversation.final_comment.text().to_string();
    if variant == ExplainerVariant::RuleHistoryCommunity {
        final_text = format!("{} {final_text}", community_token(conversation.subreddit()));
    }
    let last = format!("{final_text} {SEPARATOR} {}", rule.text());
    if !variant.uses_history() {
        return vec![last];
    }
    let mut out: Vec<String> = conversation
        .utterances()
        .into_iter()
        .map(|c| c.text().to_string())
        .collect();
    *out.last_mut().expect("a conversation has a post") = last;
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    /// Mismatched-rule negatives per moderated conversation.
    pub mismatched_per_conversation: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            mismatched_per_conversation: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounters {
    /// Moderated conversations whose subreddit has no non-violated rule.
    pub no_mismatched_candidate: usize,
    /// Controls whose paired target is absent from the input.
    pub unpaired_controls: usize,
    /// Violated rule indices missing from the rule book.
    pub unknown_rules: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairBuild {
    pub pairs: Vec<RulePairExample>,
    pub counters: PairCounters,
}

fn conversation_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id keeps draws independent of iteration order
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Positives for every violated rule, one negative per control carrying its
/// target's matched rule, and seeded mismatched-rule negatives.
pub fn build_training_pairs<'a>(
    entries: impl IntoIterator<Item = &'a DatasetEntry>,
    rules: &RuleBook,
    seed: u64,
    config: &PairConfig,
) -> PairBuild {
    let entries: Vec<&DatasetEntry> = entries.into_iter().collect();
    let by_id: BTreeMap<&str, &DatasetEntry> = entries.iter().map(|e| (e.id(), *e)).collect();
    let per_entry: Vec<(Vec<RulePairExample>, PairCounters)> = entries
        .par_iter()
        .map(|e| pairs_for_entry(e, &by_id, rules, seed, config))
        .collect();
    let mut out = PairBuild::default();
    for (pairs, c) in per_entry {
        out.pairs.extend(pairs);
        out.counters.no_mismatched_candidate += c.no_mismatched_candidate;
        out.counters.unpaired_controls += c.unpaired_controls;
        out.counters.unknown_rules += c.unknown_rules;
    }
    out
}

fn pairs_for_entry(
    e: &DatasetEntry,
    by_id: &BTreeMap<&str, &DatasetEntry>,
    rules: &RuleBook,
    seed: u64,
    config: &PairConfig,
) -> (Vec<RulePairExample>, PairCounters) {
    let mut pairs = Vec::new();
    let mut c = PairCounters::default();
    let conv = &e.conversation;
    let pair = |rule: &CommunityRule, label, provenance| RulePairExample {
        conversation: conv.clone(),
        rule: rule.clone(),
        label,
        provenance,
    };
    match &conv.moderation_event {
        Some(event) => {
            let violated = event.violated_rules();
            for idx in &violated {
                match rules.get(conv.subreddit(), *idx) {
                    Some(r) => pairs.push(pair(r, true, PairProvenance::ObservedPositive)),
                    None => c.unknown_rules += 1,
                }
            }
            let candidates: Vec<&CommunityRule> = rules
                .rules_for(conv.subreddit())
                .iter()
                .filter(|r| !violated.contains(&r.rule_index))
                .collect();
            if candidates.is_empty() {
                c.no_mismatched_candidate += 1;
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(conversation_seed(seed, e.id()));
                let k = config.mismatched_per_conversation.min(candidates.len());
                let mut drawn: Vec<&&CommunityRule> = candidates.choose_multiple(&mut rng, k).collect();
                drawn.sort_by_key(|r| r.rule_index);
                for r in drawn {
                    pairs.push(pair(r, false, PairProvenance::MismatchedRuleNegative));
                }
            }
        }
        None => {
            let target = e
                .paired_with
                .as_deref()
                .and_then(|id| by_id.get(id))
                .and_then(|t| t.conversation.moderation_event.as_ref());
            match target {
                Some(event) => match rules.resolve(&event.matched_rule) {
                    Some(r) => pairs.push(pair(r, false, PairProvenance::UnmoderatedNegative)),
                    None => c.unknown_rules += 1,
                },
                None => c.unpaired_controls += 1,
            }
        }
    }
    (pairs, c)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentedEval {
    pub pairs: Vec<RulePairExample>,
    /// Conversations dropped because their subreddit has no known rules.
    pub excluded_no_rules: usize,
}

/// Crosses every conversation with every rule of its subreddit; observed
/// violated pairs are positive, the rest negative.
pub fn build_augmented_eval<'a>(entries: impl IntoIterator<Item = &'a DatasetEntry>, rules: &RuleBook) -> AugmentedEval {
    let mut out = AugmentedEval::default();
    for e in entries {
        let conv = &e.conversation;
        let community = rules.rules_for(conv.subreddit());
        if community.is_empty() {
            out.excluded_no_rules += 1;
            continue;
        }
        let violated: BTreeSet<u32> = conv
            .moderation_event
            .as_ref()
            .map(|ev| ev.violated_rules().into_iter().collect())
            .unwrap_or_default();
        for r in community {
            let label = violated.contains(&r.rule_index);
            out.pairs.push(RulePairExample {
                conversation: conv.clone(),
                rule: r.clone(),
                label,
                provenance: if label {
                    PairProvenance::ObservedPositive
                } else {
                    PairProvenance::AugmentedEvalNegative
                },
            });
        }
    }
    out
}

pub fn write_pairs<W: Write>(pairs: &[RulePairExample], mut w: W) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<RulePairExample>, ExplainerError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ExplainerError::Read(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| ExplainerError::Read(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainerConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub variant: ExplainerVariant,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            model: ModelConfig::small(),
            train: TrainConfig::default(),
            variant: ExplainerVariant::Rule,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExplainerError {
    #[error("training pairs must contain both labels ({positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("augmented evaluation pairs cannot be used for training")]
    EvaluationPairInTraining,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("input does not fit the model: {0}")]
    Usage(#[from] ModelError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("{path}: not an explainer model")]
    WrongKind { path: String },
    #[error("cannot read pairs: {0}")]
    Read(String),
}

#[derive(Clone, Debug)]
pub struct ExplainerModel {
    pub variant: ExplainerVariant,
    pub model: SequenceClassifier,
    pub manifest: ModelManifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleScore {
    pub rule: CommunityRule,
    pub probability: f64,
}

/// Descending probability, ties by rule index.
pub fn rank(mut scores: Vec<RuleScore>) -> Vec<RuleScore> {
    scores.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then(a.rule.rule_index.cmp(&b.rule.rule_index))
    });
    scores
}

impl ExplainerModel {
    pub fn threshold(&self) -> f64 {
        self.manifest.decision_threshold
    }

    pub fn score(&self, conversation: &Conversation, rule: &CommunityRule) -> f64 {
        let texts = build_pair_input(conversation, rule, self.variant);
        let input = self.model.featurizer().encode(&texts);
        self.model
            .predict(&input)
            .expect("variant-built inputs always fit the model")
    }

    /// Every rule scored and ranked; an empty rule list gives an empty result.
    pub fn explain(&self, conversation: &Conversation, rules: &[CommunityRule]) -> Vec<RuleScore> {
        rank(
            rules
                .iter()
                .map(|r| RuleScore {
                    rule: r.clone(),
                    probability: self.score(conversation, r),
                })
                .collect(),
        )
    }

    pub fn predict_pairs(&self, pairs: &[RulePairExample], split_seed: u64) -> Vec<PredictionRecord> {
        pairs
            .par_iter()
            .map(|p| {
                PredictionRecord::thresholded(
                    p.example_id(),
                    PAIR_TARGET,
                    self.score(&p.conversation, &p.rule),
                    self.threshold(),
                    p.label,
                )
                .tagged(self.variant.name(), self.manifest.seed, split_seed)
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), ExplainerError> {
        save_model(dir, &self.manifest, &self.model)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ExplainerError> {
        let (manifest, model) = load_model(dir)?;
        let variant = manifest.variant.as_deref().and_then(|v| v.parse().ok());
        match variant {
            Some(variant) if manifest.kind == MODEL_KIND => Ok(ExplainerModel {
                variant,
                model,
                manifest,
            }),
            _ => Err(ExplainerError::WrongKind {
                path: dir.display().to_string(),
            }),
        }
    }
}

/// Trains the universal pair model with early stopping on `dev`.
pub fn train_explainer(
    train: &[RulePairExample],
    dev: &[RulePairExample],
    seed: u64,
    config: &ExplainerConfig,
) -> Result<(ExplainerModel, FitReport), ExplainerError> {
    if train
        .iter()
        .any(|p| p.provenance == PairProvenance::AugmentedEvalNegative)
    {
        return Err(ExplainerError::EvaluationPairInTraining);
    }
    let positives = train.iter().filter(|p| p.label).count();
    let negatives = train.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ExplainerError::SingleClass { positives, negatives });
    }
    let variant = config.variant;
    let encode = |pairs: &[RulePairExample]| -> Vec<LabeledInput> {
        pairs
            .par_iter()
            .map(|p| {
                let texts = build_pair_input(&p.conversation, &p.rule, variant);
                (config.model.featurizer.encode(&texts), p.label)
            })
            .collect()
    };
    let train_set = encode(train);
    let dev_set = encode(dev);
    let mut model = SequenceClassifier::new(&config.model, variant.uses_history(), seed);
    let report = fit(&mut model, &train_set, &dev_set, &config.train, seed)?;
    let threshold = config.train.decision_threshold;
    let train_f1 = counts_at(&model, &train_set, threshold)?.macro_f1();
    let mut metrics = BTreeMap::from([
        ("train_macro_f1".to_string(), train_f1),
        ("epochs_run".to_string(), report.epochs_run as f64),
        ("best_epoch".to_string(), report.best_epoch as f64),
        ("train_pairs".to_string(), train.len() as f64),
        ("dev_pairs".to_string(), dev.len() as f64),
    ]);
    if let Some(f) = report.best_dev_macro_f1 {
        metrics.insert("best_dev_macro_f1".to_string(), f);
    }
    info!(variant = variant.name(), seed, train_f1, "explainer trained");
    let manifest = ModelManifest {
        kind: MODEL_KIND.to_string(),
        target: "universal".to_string(),
        variant: Some(variant.name().to_string()),
        seed,
        decision_threshold: threshold,
        encoder_checkpoint: config.model.encoder_checkpoint.clone(),
        with_context: variant.uses_history(),
        model: config.model.clone(),
        train: config.train.clone(),
        metrics,
        options: BTreeMap::new(),
    };
    Ok((
        ExplainerModel {
            variant,
            model,
            manifest,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Comment, MatchMethod, ModerationEvent};

    fn comment(id: &str, parent: Option<&str>, sub: &str) -> Comment {
        Comment {
            comment_id: id.into(),
            parent_id: parent.map(Into::into),
            post_id: "p".into(),
            subreddit: sub.into(),
            author_pseudonym: "u".into(),
            body: Some(format!("text of {id}")),
            created_utc: 0,
            removed: false,
            author_is_moderator: false,
        }
    }

    fn book(sub: &str, n: u32) -> RuleBook {
        RuleBook::from_rules((1..=n).map(|i| CommunityRule::new(sub, i, format!("Rule {i}"), format!("desc {i}"))))
            .unwrap()
    }

    fn entry(id: &str, sub: &str, violated: &[u32], paired_with: Option<&str>) -> DatasetEntry {
        let post = comment("p", None, sub);
        let final_comment = comment(id, Some("p"), sub);
        let moderation_event = (!violated.is_empty()).then(|| ModerationEvent {
            moderation_comment_id: format!("{id}m"),
            removed_comment_id: id.into(),
            matched_rule: crate::corpus::RuleRef {
                subreddit: sub.into(),
                rule_index: violated[0],
            },
            match_method: MatchMethod::RuleNumberPhrase,
            additional_rules: violated[1..].to_vec(),
            violation_types: BTreeSet::new(),
        });
        DatasetEntry {
            conversation: Conversation {
                post,
                chain: vec![],
                final_comment,
                moderation_event,
            },
            forecast_only: false,
            paired_with: paired_with.map(Into::into),
            violation_types: BTreeSet::new(),
        }
    }

    #[test]
    fn two_violated_rules_give_two_positives_and_a_valid_mismatch() {
        let rules = book("s", 6);
        let e = entry("a", "s", &[2, 5], None);
        for seed in 0..50 {
            let b = build_training_pairs([&e], &rules, seed, &PairConfig::default());
            let pos: Vec<u32> = b.pairs.iter().filter(|p| p.label).map(|p| p.rule.rule_index).collect();
            assert_eq!(pos, vec![2, 5]);
            let neg: Vec<&RulePairExample> = b.pairs.iter().filter(|p| !p.label).collect();
            assert_eq!(neg.len(), 1);
            assert!([1, 3, 4, 6].contains(&neg[0].rule.rule_index));
        }
    }

    #[test]
    fn control_carries_target_rule() {
        let rules = book("s", 3);
        let t = entry("a", "s", &[2], None);
        let c = entry("b", "s", &[], Some("a"));
        let b = build_training_pairs([&t, &c], &rules, 0, &PairConfig::default());
        let control: Vec<&RulePairExample> = b
            .pairs
            .iter()
            .filter(|p| p.provenance == PairProvenance::UnmoderatedNegative)
            .collect();
        assert_eq!(control.len(), 1);
        assert_eq!(control[0].rule.rule_index, 2);
        assert!(!control[0].label);
    }

    #[test]
    fn single_rule_subreddit_has_no_mismatch() {
        let rules = book("s", 1);
        let e = entry("a", "s", &[1], None);
        let b = build_training_pairs([&e], &rules, 0, &PairConfig::default());
        assert_eq!(b.pairs.len(), 1);
        assert_eq!(b.counters.no_mismatched_candidate, 1);
    }

    #[test]
    fn augmented_eval_counts() {
        let rules = book("s", 3);
        let one = entry("a", "s", &[2], None);
        let two = entry("b", "s", &[1, 3], None);
        let orphan = entry("c", "elsewhere", &[1], None);
        let aug = build_augmented_eval([&one, &two, &orphan], &rules);
        assert_eq!(aug.pairs.len(), 6);
        assert_eq!(aug.excluded_no_rules, 1);
        assert_eq!(aug.pairs[..3].iter().filter(|p| p.label).count(), 1);
        assert_eq!(aug.pairs[3..].iter().filter(|p| p.label).count(), 2);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let rules = book("s", 3);
        let scores = vec![0.2, 0.9, 0.9]
            .into_iter()
            .zip(rules.rules_for("s"))
            .map(|(p, r)| RuleScore {
                rule: r.clone(),
                probability: p,
            })
            .collect();
        let order: Vec<u32> = rank(scores).iter().map(|s| s.rule.rule_index).collect();
        assert_eq!(order, vec![2, 3, 1]);
    }

    #[test]
    fn pair_input_puts_rule_after_separator() {
        let rules = book("s", 1);
        let e = entry("a", "s", &[1], None);
        let r = &rules.rules_for("s")[0];
        let one = build_pair_input(&e.conversation, r, ExplainerVariant::Rule);
        assert_eq!(one, vec!["text of a [SEP] Rule 1: desc 1"]);
        let hist = build_pair_input(&e.conversation, r, ExplainerVariant::RuleHistoryCommunity);
        assert_eq!(hist, vec!["text of p".to_string(), "r/s text of a [SEP] Rule 1: desc 1".to_string()]);
    }

    #[test]
    fn single_class_training_rejected() {
        let rules = book("s", 2);
        let e = entry("a", "s", &[1], None);
        let pos: Vec<RulePairExample> = build_training_pairs([&e], &rules, 0, &PairConfig::default())
            .pairs
            .into_iter()
            .filter(|p| p.label)
            .collect();
        assert!(matches!(
            train_explainer(&pos, &[], 0, &ExplainerConfig::default()),
            Err(ExplainerError::SingleClass { .. })
        ));
    }
}
