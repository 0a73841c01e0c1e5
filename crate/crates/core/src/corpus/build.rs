use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::archive::{fetch_removed_body, ArchiveClient, ArchiveConfig};
use super::dataset::{Dataset, DatasetEntry};
use super::moderation::detect_moderation_event;
use super::pairing::{control_candidates, pair_controls};
use super::rules::RuleBook;
use super::store::CommentStore;
use super::thread::reconstruct_thread;
use super::{Comment, CorpusError, ModerationEvent};
use crate::taxonomy::CoarseRuleType;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    #[serde(default)]
    pub archive: ArchiveConfig,
}

/// Counters describing what the build kept and dropped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub comments: usize,
    pub moderator_replies_to_removed: usize,
    pub unmatched_moderator_replies: usize,
    pub moderated_conversations: usize,
    pub bodies_restored: usize,
    pub forecast_only: usize,
    pub partial_threads: usize,
    pub cyclic_threads: usize,
    pub controls: usize,
    pub targets_without_controls: usize,
}

#[derive(Clone, Debug)]
pub struct BuiltCorpus {
    pub dataset: Dataset,
    pub report: BuildReport,
}

struct Detected {
    moderation_comment_id: String,
    moderator: String,
    removed_comment_id: String,
    event_rules: Vec<(u32, super::MatchMethod)>,
}

/// Builds the dataset from a comment store.
///
/// Moderator replies to removed comments are matched against the removed
/// comment's community rules. The earliest matching reply supplies the
/// primary rule; distinct rules cited by later replies are recorded as
/// additional violations. Removed text missing from the store is fetched
/// from `archive` when one is given; otherwise, or when the archive lacks
/// it, the conversation is kept and flagged forecast-only. Every moderated
/// conversation is then paired with up to two controls from its post, and a
/// control is never reused within a post.
pub fn build_corpus(
    store: &mut CommentStore,
    rules: &RuleBook,
    archive: Option<&dyn ArchiveClient>,
    config: &BuildConfig,
) -> Result<BuiltCorpus, CorpusError> {
    let mut report = BuildReport {
        comments: store.len(),
        ..BuildReport::default()
    };

    let mut replies: Vec<&Comment> = store
        .iter()
        .filter(|c| c.author_is_moderator)
        .filter(|c| {
            c.parent_id
                .as_deref()
                .and_then(|p| store.get(p))
                .is_some_and(|p| p.removed && p.subreddit == c.subreddit)
        })
        .collect();
    replies.sort_by(|a, b| (a.created_utc, &a.comment_id).cmp(&(b.created_utc, &b.comment_id)));
    report.moderator_replies_to_removed = replies.len();

    let mut detected: BTreeMap<String, Detected> = BTreeMap::new();
    for reply in replies {
        let removed = reply.parent_id.clone().expect("filtered to replies");
        let Some(m) = detect_moderation_event(reply, rules.rules_for(&reply.subreddit)) else {
            report.unmatched_moderator_replies += 1;
            continue;
        };
        let entry = detected.entry(removed.clone()).or_insert_with(|| Detected {
            moderation_comment_id: reply.comment_id.clone(),
            moderator: reply.author_pseudonym.clone(),
            removed_comment_id: removed,
            event_rules: Vec::new(),
        });
        if !entry.event_rules.iter().any(|(i, _)| *i == m.rule_index) {
            entry.event_rules.push((m.rule_index, m.method));
        }
    }

    let mut forecast_only = HashSet::new();
    for id in detected.keys() {
        if store.get(id).is_some_and(|c| c.body.is_some()) {
            continue;
        }
        match archive.and_then(|a| fetch_removed_body(id, a, &config.archive)) {
            Some(body) => {
                store.restore_body(id, body)?;
                report.bodies_restored += 1;
            }
            None => {
                forecast_only.insert(id.clone());
            }
        }
    }
    let store: &CommentStore = store;

    let mut targets = Vec::new();
    let mut moderators = BTreeSet::new();
    for d in detected.into_values() {
        let mut conversation = match reconstruct_thread(&d.removed_comment_id, store) {
            Ok(c) => c,
            Err(CorpusError::PartialThread { removed, missing, .. }) => {
                debug!(%removed, %missing, "skipping broken thread");
                report.partial_threads += 1;
                continue;
            }
            Err(CorpusError::Cycle(id)) => {
                debug!(%id, "skipping cyclic thread");
                report.cyclic_threads += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let subreddit = conversation.subreddit().to_string();
        let (primary, method) = d.event_rules[0];
        let matched = rules
            .get(&subreddit, primary)
            .expect("detection only returns existing rules");
        let mut violation_types: BTreeSet<CoarseRuleType> = BTreeSet::new();
        for (index, _) in &d.event_rules {
            if let Some(r) = rules.get(&subreddit, *index) {
                violation_types.extend(r.coarse_types());
            }
        }
        conversation.moderation_event = Some(ModerationEvent {
            moderation_comment_id: d.moderation_comment_id,
            removed_comment_id: d.removed_comment_id.clone(),
            matched_rule: matched.reference(),
            match_method: method,
            additional_rules: d.event_rules[1..].iter().map(|(i, _)| *i).collect(),
            violation_types: matched.coarse_types().clone(),
        });
        moderators.insert(d.moderator);
        let is_forecast = forecast_only.contains(&d.removed_comment_id);
        report.forecast_only += usize::from(is_forecast);
        targets.push(DatasetEntry {
            conversation,
            forecast_only: is_forecast,
            paired_with: None,
            violation_types,
        });
    }
    targets.sort_by(|a, b| {
        let key = |e: &DatasetEntry| (e.conversation.final_comment.created_utc, e.id().to_string());
        key(a).cmp(&key(b))
    });
    report.moderated_conversations = targets.len();

    let mut candidates_by_post = BTreeMap::new();
    let mut entries = Vec::with_capacity(targets.len() * 3);
    for target in targets {
        let post = target.conversation.post_id().to_string();
        let pool = candidates_by_post
            .entry(post.clone())
            .or_insert_with(|| control_candidates(store, &post));
        let controls = pair_controls(&target.conversation, pool);
        if controls.is_empty() {
            report.targets_without_controls += 1;
        }
        let used: HashSet<String> = controls
            .iter()
            .map(|c| c.final_comment.comment_id.clone())
            .collect();
        pool.retain(|c| !used.contains(&c.final_comment.comment_id));
        report.controls += controls.len();
        let group = target.id().to_string();
        let flag = target.forecast_only;
        entries.push(target);
        entries.extend(controls.into_iter().map(|conversation| DatasetEntry {
            conversation,
            forecast_only: flag,
            paired_with: Some(group.clone()),
            violation_types: BTreeSet::new(),
        }));
    }

    info!(
        moderated = report.moderated_conversations,
        controls = report.controls,
        forecast_only = report.forecast_only,
        "corpus built"
    );
    Ok(BuiltCorpus {
        dataset: Dataset {
            entries,
            moderators,
        },
        report,
    })
}
