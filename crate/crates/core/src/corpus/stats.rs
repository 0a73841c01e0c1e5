use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::rules::RuleBook;
use crate::taxonomy::CoarseRuleType;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeShare {
    pub coarse_type: CoarseRuleType,
    /// Fraction of the dataset communities' rules carrying this type.
    pub rule_share: f64,
    /// Fraction of moderated conversations violating this type.
    pub violation_share: f64,
    pub violations: usize,
    /// Mean utterances between post and violating comment.
    pub avg_utterances_before_violation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_conversations: usize,
    pub moderated: usize,
    pub unmoderated: usize,
    pub forecast_only: usize,
    pub subreddits: usize,
    pub rules: usize,
    pub moderators: usize,
    /// Mean word count of final comments with available text.
    pub avg_comment_words: f64,
    /// Mean number of prior utterances, post included.
    pub avg_context: f64,
    pub avg_rules_per_community: f64,
    pub per_type: Vec<TypeShare>,
}

fn mean(total: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Summary statistics of a dataset; rules count only for communities that
/// appear in the dataset.
pub fn corpus_stats(dataset: &Dataset, rules: &RuleBook) -> CorpusStats {
    let subreddits = dataset.subreddits();
    let community_rules: Vec<_> = rules
        .iter()
        .filter(|r| subreddits.contains(r.subreddit.as_str()))
        .collect();
    let moderated: Vec<_> = dataset.moderated().collect();

    let texts: Vec<&str> = dataset
        .entries
        .iter()
        .filter_map(|e| e.conversation.final_comment.body.as_deref())
        .collect();
    let words: usize = texts.iter().map(|t| t.split_whitespace().count()).sum();
    let context: usize = dataset
        .entries
        .iter()
        .map(|e| e.conversation.context_size())
        .sum();
    let communities_with_rules: BTreeSet<&str> =
        community_rules.iter().map(|r| r.subreddit.as_str()).collect();

    let per_type = CoarseRuleType::ALL
        .iter()
        .map(|&t| {
            let with_type = community_rules
                .iter()
                .filter(|r| r.coarse_types().contains(&t))
                .count();
            let violating: Vec<_> = moderated
                .iter()
                .filter(|e| e.violation_types.contains(&t))
                .collect();
            let before: usize = violating.iter().map(|e| e.conversation.length()).sum();
            TypeShare {
                coarse_type: t,
                rule_share: mean(with_type as f64, community_rules.len()),
                violation_share: mean(violating.len() as f64, moderated.len()),
                violations: violating.len(),
                avg_utterances_before_violation: mean(before as f64, violating.len()),
            }
        })
        .collect();

    CorpusStats {
        total_conversations: dataset.len(),
        moderated: moderated.len(),
        unmoderated: dataset.len() - moderated.len(),
        forecast_only: dataset.entries.iter().filter(|e| e.forecast_only).count(),
        subreddits: subreddits.len(),
        rules: community_rules.len(),
        moderators: dataset.moderators.len(),
        avg_comment_words: mean(words as f64, texts.len()),
        avg_context: mean(context as f64, dataset.len()),
        avg_rules_per_community: mean(community_rules.len() as f64, communities_with_rules.len()),
        per_type,
    }
}
