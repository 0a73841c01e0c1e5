//! Corpus construction from moderation traces.
//!
//! The pipeline ingests newline-delimited comment dumps, finds moderator
//! replies that name a community rule, rebuilds the conversation that led to
//! each removed comment, pairs it with length-matched unmoderated
//! conversations from the same post, and serializes an id-only release.

mod archive;
mod build;
mod dataset;
mod dump;
mod moderation;
mod pairing;
mod release;
mod rules;
mod stats;
mod store;
mod thread;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::taxonomy::CoarseRuleType;

pub use archive::{
    fetch_removed_body, ArchiveClient, ArchiveConfig, ArchiveError, FileArchive,
};
pub use build::{build_corpus, BuildConfig, BuildReport, BuiltCorpus};
pub use dataset::{split_dataset, DataSplit, Dataset, DatasetEntry, SplitFractions};
pub use dump::{parse_dump, parse_dump_shards, write_dump, DumpRecord, ParsedDump, MAX_MALFORMED_RATIO};
pub use moderation::{detect_moderation_event, normalize_text, RuleMatch};
pub use pairing::{control_candidates, pair_controls};
pub use release::{
    rehydrate, serialize_release, AnonymizationMap, Release, ReleaseModeration, ReleaseRecord,
    Scrubber,
};
pub use rules::{read_rules, write_rules, CommunityRule, RuleBook, RuleRecord, RuleRef};
pub use stats::{corpus_stats, CorpusStats, TypeShare};
pub use store::CommentStore;
pub use thread::reconstruct_thread;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("{malformed} of {total} dump lines are malformed (limit 10%)")]
    TooManyMalformed { malformed: usize, total: usize },
    #[error("comment `{0}` appears more than once")]
    DuplicateComment(String),
    #[error("comment `{0}` not found")]
    MissingComment(String),
    #[error("comment `{0}` lists itself as its parent")]
    SelfParent(String),
    #[error("thread for `{removed}` is broken: ancestor `{missing}` is missing")]
    PartialThread {
        removed: String,
        missing: String,
        /// Reachable part of the thread, oldest first, ending at the removed comment.
        reachable: Vec<Comment>,
    },
    #[error("parent chain of `{0}` contains a cycle")]
    Cycle(String),
    #[error("rule {rule_index} is defined twice for r/{subreddit}")]
    DuplicateRule { subreddit: String, rule_index: u32 },
    #[error("rule index must be 1-based (r/{0})")]
    ZeroRuleIndex(String),
    #[error("release record {record} failed the privacy check: {reason}")]
    Scrubber { record: usize, reason: String },
    #[error("release record {record} references unknown comment `{id}`")]
    Rehydrate { record: usize, id: String },
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
}

/// One utterance in a thread. Posts have no parent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: String,
    pub parent_id: Option<String>,
    pub post_id: String,
    pub subreddit: String,
    pub author_pseudonym: String,
    /// `None` when the text is unavailable, e.g. a removed comment that has
    /// not been restored from an archive.
    pub body: Option<String>,
    pub created_utc: i64,
    pub removed: bool,
    pub author_is_moderator: bool,
}

impl Comment {
    pub fn is_post(&self) -> bool {
        self.parent_id.is_none()
    }

    pub fn text(&self) -> &str {
        self.body.as_deref().unwrap_or("")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    RuleNumberPhrase,
    VerbatimRuleText,
}

/// Links a moderator's explanation to the removed comment and the rule it cites.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModerationEvent {
    pub moderation_comment_id: String,
    pub removed_comment_id: String,
    pub matched_rule: RuleRef,
    pub match_method: MatchMethod,
    /// Further distinct rules cited by other moderator replies to the same
    /// removed comment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub additional_rules: Vec<u32>,
    pub violation_types: BTreeSet<CoarseRuleType>,
}

impl ModerationEvent {
    /// Every rule index the conversation is known to violate, primary first.
    pub fn violated_rules(&self) -> Vec<u32> {
        std::iter::once(self.matched_rule.rule_index)
            .chain(self.additional_rules.iter().copied())
            .collect()
    }
}

/// A root post and the parent chain leading to the final comment.
///
/// When the violating item is the post itself, `chain` is empty and
/// `final_comment` equals `post`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub post: Comment,
    pub chain: Vec<Comment>,
    pub final_comment: Comment,
    pub moderation_event: Option<ModerationEvent>,
}

impl Conversation {
    pub fn moderated(&self) -> bool {
        self.moderation_event.is_some()
    }

    pub fn subreddit(&self) -> &str {
        &self.final_comment.subreddit
    }

    pub fn post_id(&self) -> &str {
        &self.post.comment_id
    }

    pub fn final_is_post(&self) -> bool {
        self.final_comment.comment_id == self.post.comment_id
    }

    /// Utterances after the post up to and including the final comment:
    /// 0 when the post itself is final, 1 for a direct reply.
    pub fn length(&self) -> usize {
        if self.final_is_post() {
            0
        } else {
            self.chain.len() + 1
        }
    }

    /// Post, chain and final comment in order, without repeating the post.
    pub fn utterances(&self) -> Vec<&Comment> {
        let mut out = vec![&self.post];
        out.extend(self.chain.iter());
        if !self.final_is_post() {
            out.push(&self.final_comment);
        }
        out
    }

    pub fn comment_ids(&self) -> Vec<String> {
        self.utterances()
            .into_iter()
            .map(|c| c.comment_id.clone())
            .collect()
    }

    /// Prior context available to the final comment, counting the post.
    pub fn context_size(&self) -> usize {
        self.utterances().len() - 1
    }
}
