use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::dataset::{Dataset, DatasetEntry};
use super::rules::RuleBook;
use super::store::CommentStore;
use super::{Conversation, CorpusError, MatchMethod, ModerationEvent};
use crate::taxonomy::CoarseRuleType;

/// Keys that must never appear in a release record.
const FORBIDDEN_KEYS: [&str; 6] = ["body", "text", "author", "author_pseudonym", "username", "user"];

/// Strings at least this long are also rejected when merely contained in
/// a value, not only on exact equality.
const CONTAINMENT_MIN_LEN: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseModeration {
    pub moderation_comment_id: String,
    pub rule_index: u32,
    pub match_method: MatchMethod,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub additional_rules: Vec<u32>,
}

/// Id-only description of one dataset conversation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReleaseRecord {
    /// Comment ids, post first, final comment last.
    pub conversation: Vec<String>,
    /// Anonymized author ids aligned with `conversation`.
    pub speakers: Vec<String>,
    pub subreddit: String,
    pub moderated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moderation: Option<ReleaseModeration>,
    pub violation_types: BTreeSet<CoarseRuleType>,
    #[serde(default)]
    pub forecast_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_with: Option<String>,
}

/// Private mapping from raw author names to their released ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationMap {
    pub authors: BTreeMap<String, String>,
}

impl AnonymizationMap {
    /// Stable id for `raw`, issued in first-seen order.
    pub fn anonymize(&mut self, raw: &str) -> String {
        if let Some(id) = self.authors.get(raw) {
            return id.clone();
        }
        let id = format!("anon_{:06}", self.authors.len());
        self.authors.insert(raw.to_string(), id.clone());
        id
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), CorpusError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Privacy check applied to every serialized release line.
#[derive(Clone, Debug, Default)]
pub struct Scrubber {
    secrets: HashSet<String>,
}

impl Scrubber {
    pub fn new(secrets: impl IntoIterator<Item = String>) -> Self {
        Scrubber {
            secrets: secrets.into_iter().filter(|s| !s.trim().is_empty()).collect(),
        }
    }

    /// Collects every body text and author name in the dataset.
    pub fn for_dataset(dataset: &Dataset) -> Self {
        let mut secrets = Vec::new();
        for e in &dataset.entries {
            for c in e.conversation.utterances() {
                secrets.push(c.author_pseudonym.clone());
                if let Some(b) = &c.body {
                    secrets.push(b.clone());
                }
            }
        }
        secrets.extend(dataset.moderators.iter().cloned());
        Scrubber::new(secrets)
    }

    /// Rejects a line with a forbidden key anywhere, a value equal to a
    /// secret, or a value containing a secret of non-trivial length.
    pub fn check(&self, record: usize, line: &str) -> Result<(), CorpusError> {
        let fail = |reason: String| CorpusError::Scrubber { record, reason };
        let value: Value = serde_json::from_str(line)?;
        let mut stack = vec![&value];
        while let Some(v) = stack.pop() {
            match v {
                Value::Object(map) => {
                    for (k, child) in map {
                        if FORBIDDEN_KEYS.contains(&k.as_str()) {
                            return Err(fail(format!("forbidden field `{k}`")));
                        }
                        stack.push(child);
                    }
                }
                Value::Array(items) => stack.extend(items),
                Value::String(s) => {
                    if self.secrets.contains(s) {
                        return Err(fail("value equals source text or author name".into()));
                    }
                }
                _ => {}
            }
        }
        for secret in &self.secrets {
            if secret.chars().count() >= CONTAINMENT_MIN_LEN && line.contains(secret.as_str()) {
                return Err(fail("line contains source text or author name".into()));
            }
        }
        Ok(())
    }
}

/// Release records plus the private author mapping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Release {
    pub records: Vec<ReleaseRecord>,
    pub anonymization: AnonymizationMap,
}

impl Release {
    pub fn write_records<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ReleaseRecord>, CorpusError> {
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }
}

fn to_record(entry: &DatasetEntry, anon: &mut AnonymizationMap) -> ReleaseRecord {
    let conv = &entry.conversation;
    let utterances = conv.utterances();
    ReleaseRecord {
        conversation: utterances.iter().map(|c| c.comment_id.clone()).collect(),
        speakers: utterances
            .iter()
            .map(|c| anon.anonymize(&c.author_pseudonym))
            .collect(),
        subreddit: conv.subreddit().to_string(),
        moderated: conv.moderated(),
        moderation: conv.moderation_event.as_ref().map(|e| ReleaseModeration {
            moderation_comment_id: e.moderation_comment_id.clone(),
            rule_index: e.matched_rule.rule_index,
            match_method: e.match_method,
            additional_rules: e.additional_rules.clone(),
        }),
        violation_types: entry.violation_types.clone(),
        forecast_only: entry.forecast_only,
        paired_with: entry.paired_with.clone(),
    }
}

/// Serializes the dataset to id-only records. Every record is checked by a
/// scrubber built from the dataset's own text and author names; the first
/// failure aborts the release.
pub fn serialize_release(dataset: &Dataset) -> Result<Release, CorpusError> {
    let scrubber = Scrubber::for_dataset(dataset);
    let mut anonymization = AnonymizationMap::default();
    let mut records = Vec::with_capacity(dataset.len());
    for (i, entry) in dataset.entries.iter().enumerate() {
        let record = to_record(entry, &mut anonymization);
        scrubber.check(i, &serde_json::to_string(&record)?)?;
        records.push(record);
    }
    Ok(Release {
        records,
        anonymization,
    })
}

/// Rebuilds full conversations from release records and a comment store.
pub fn rehydrate(
    records: &[ReleaseRecord],
    store: &CommentStore,
    rules: &RuleBook,
) -> Result<Dataset, CorpusError> {
    let lookup = |record: usize, id: &str| {
        store.get(id).cloned().ok_or_else(|| CorpusError::Rehydrate {
            record,
            id: id.to_string(),
        })
    };
    let mut dataset = Dataset::default();
    for (i, r) in records.iter().enumerate() {
        let Some((first, rest)) = r.conversation.split_first() else {
            return Err(CorpusError::Rehydrate {
                record: i,
                id: String::new(),
            });
        };
        let post = lookup(i, first)?;
        let mut chain = rest
            .iter()
            .map(|id| lookup(i, id))
            .collect::<Result<Vec<_>, _>>()?;
        let final_comment = chain.pop().unwrap_or_else(|| post.clone());
        let moderation_event = match &r.moderation {
            None => None,
            Some(m) => {
                let rule = rules.get(&r.subreddit, m.rule_index).ok_or_else(|| {
                    CorpusError::Rehydrate {
                        record: i,
                        id: format!("rule {} of r/{}", m.rule_index, r.subreddit),
                    }
                })?;
                let moderator = lookup(i, &m.moderation_comment_id)?;
                dataset.moderators.insert(moderator.author_pseudonym);
                Some(ModerationEvent {
                    moderation_comment_id: m.moderation_comment_id.clone(),
                    removed_comment_id: final_comment.comment_id.clone(),
                    matched_rule: rule.reference(),
                    match_method: m.match_method,
                    additional_rules: m.additional_rules.clone(),
                    violation_types: rule.coarse_types().clone(),
                })
            }
        };
        dataset.entries.push(DatasetEntry {
            conversation: Conversation {
                post,
                chain,
                final_comment,
                moderation_event,
            },
            forecast_only: r.forecast_only,
            paired_with: r.paired_with.clone(),
            violation_types: r.violation_types.clone(),
        });
    }
    Ok(dataset)
}
