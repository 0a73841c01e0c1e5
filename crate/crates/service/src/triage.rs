use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::info;

use normvio_core::corpus::{Comment, Conversation, RuleBook};
use normvio_core::taxonomy::CoarseRuleType;

use crate::error::ServiceError;
use crate::item::{DecisionAction, ItemStatus, LabeledExample, RulePrediction, TriageItem, TypeScore};
use crate::log::{order_bits, queue_key, DecisionLog, LogRecord, QueueState};
use crate::scorer::Scorer;

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

/// Seconds since the epoch, swappable for tests.
pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0)
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceIn {
    pub author: String,
    pub body: String,
    pub created_utc: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub subreddit: String,
    /// Oldest first: the post, its replies, and the comment to score last.
    pub conversation: Vec<UtteranceIn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub item_id: Option<String>,
    pub predictions: Vec<RulePrediction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub type_scores: Vec<TypeScore>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub item_id: String,
    pub action: DecisionAction,
    #[serde(default)]
    pub rule_index: Option<u32>,
    pub actor: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub items: Vec<TriageItem>,
    pub next_cursor: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleView {
    pub rule_index: u32,
    pub short_name: String,
    pub description: String,
    pub text: String,
    pub coarse_types: Vec<CoarseRuleType>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RulesResponse {
    pub subreddit: String,
    pub rules: Vec<RuleView>,
}

struct Inner {
    state: QueueState,
    log: DecisionLog,
    export: Option<BufWriter<File>>,
}

/// Scoring, queue and decision handling behind the HTTP layer.
pub struct Triage {
    rules: RuleBook,
    scorer: Option<Arc<dyn Scorer>>,
    threshold: f64,
    community_thresholds: BTreeMap<String, f64>,
    clock: Clock,
    inner: Mutex<Inner>,
}

pub struct TriageBuilder {
    rules: RuleBook,
    scorer: Option<Arc<dyn Scorer>>,
    threshold: f64,
    community_thresholds: BTreeMap<String, f64>,
    clock: Clock,
    log: DecisionLog,
    replay: Vec<LogRecord>,
    export: Option<BufWriter<File>>,
}

impl TriageBuilder {
    pub fn scorer(mut self, scorer: Arc<dyn Scorer>) -> Self {
        self.scorer = Some(scorer);
        self
    }

    pub fn threshold(mut self, t: f64) -> Self {
        self.threshold = t;
        self
    }

    pub fn community_thresholds(mut self, t: BTreeMap<String, f64>) -> Self {
        self.community_thresholds = t;
        self
    }

    pub fn clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Appends to `path` and restores the states recorded in it.
    pub fn log_file(mut self, path: &Path) -> Result<Self, ServiceError> {
        let (log, records) = DecisionLog::open(path)?;
        self.log = log;
        self.replay = records;
        Ok(self)
    }

    pub fn export_file(mut self, path: &Path) -> Result<Self, ServiceError> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        self.export = Some(BufWriter::new(f));
        Ok(self)
    }

    pub fn build(self) -> Result<Triage, ServiceError> {
        let state = QueueState::replay(&self.replay)?;
        if !self.replay.is_empty() {
            info!(records = self.replay.len(), items = state.items().len(), "decision log replayed");
        }
        Ok(Triage {
            rules: self.rules,
            scorer: self.scorer,
            threshold: self.threshold,
            community_thresholds: self.community_thresholds,
            clock: self.clock,
            inner: Mutex::new(Inner {
                state,
                log: self.log,
                export: self.export,
            }),
        })
    }
}

/// Hex sha256 of the request's canonical JSON.
pub fn payload_digest(req: &ScoreRequest) -> String {
    let bytes = serde_json::to_vec(req).expect("request serializes");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Turns request utterances into a conversation with synthetic ids derived
/// from the payload digest.
pub fn to_conversation(req: &ScoreRequest, digest: &str) -> Conversation {
    let stem = &digest[..12];
    let ids: Vec<String> = (0..req.conversation.len()).map(|i| format!("{stem}-{i}")).collect();
    let mut comments: Vec<Comment> = req
        .conversation
        .iter()
        .enumerate()
        .map(|(i, u)| Comment {
            comment_id: ids[i].clone(),
            parent_id: (i > 0).then(|| ids[i - 1].clone()),
            post_id: ids[0].clone(),
            subreddit: req.subreddit.clone(),
            author_pseudonym: u.author.clone(),
            body: Some(u.body.clone()),
            created_utc: u.created_utc,
            removed: false,
            author_is_moderator: false,
        })
        .collect();
    let final_comment = comments.last().cloned().expect("non-empty conversation");
    let post = comments.remove(0);
    comments.pop();
    Conversation {
        post,
        chain: comments,
        final_comment,
        moderation_event: None,
    }
}

fn encode_cursor(item: &TriageItem) -> String {
    format!("{:016x}.{}", order_bits(item.top_probability()), item.item_id)
}

fn decode_cursor(cursor: &str) -> Result<(std::cmp::Reverse<u64>, String), ServiceError> {
    let bad = || ServiceError::BadRequest(format!("malformed cursor `{cursor}`"));
    let (bits, id) = cursor.split_once('.').ok_or_else(bad)?;
    let bits = u64::from_str_radix(bits, 16).map_err(|_| bad())?;
    Ok((std::cmp::Reverse(bits), id.to_string()))
}

impl Triage {
    pub fn builder(rules: RuleBook) -> TriageBuilder {
        TriageBuilder {
            rules,
            scorer: None,
            threshold: 0.5,
            community_thresholds: BTreeMap::new(),
            clock: system_clock(),
            log: DecisionLog::in_memory(),
            replay: Vec::new(),
            export: None,
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn threshold_for(&self, subreddit: &str) -> f64 {
        self.community_thresholds
            .get(subreddit)
            .copied()
            .unwrap_or(self.threshold)
    }

    /// Scores a conversation and queues it when any probability reaches the
    /// community's threshold. An identical payload seen before returns the
    /// item created for it instead of a new one.
    pub fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ServiceError> {
        let rules = self.rules.rules_for(&req.subreddit);
        if rules.is_empty() {
            return Err(ServiceError::UnknownSubreddit(req.subreddit.clone()));
        }
        let scorer = self.scorer.as_ref().ok_or(ServiceError::ModelUnavailable)?;
        if req.conversation.is_empty() {
            return Err(ServiceError::BadRequest("conversation is empty".into()));
        }
        let digest = payload_digest(req);
        if let Some(existing) = self.lock().state.by_digest(&digest) {
            return Ok(ScoreResponse {
                item_id: Some(existing.item_id.clone()),
                predictions: existing.predictions.clone(),
                type_scores: existing.type_scores.clone(),
            });
        }

        let conversation = to_conversation(req, &digest);
        let scores = scorer.score(&conversation, rules);
        let threshold = self.threshold_for(&req.subreddit);
        let flagged = scores
            .predictions
            .iter()
            .map(|p| p.probability)
            .chain(scores.type_scores.iter().map(|t| t.probability))
            .any(|p| p >= threshold);
        if !flagged {
            return Ok(ScoreResponse {
                item_id: None,
                predictions: scores.predictions,
                type_scores: scores.type_scores,
            });
        }

        let mut inner = self.lock();
        // a concurrent request with the same payload may have won the race
        if let Some(existing) = inner.state.by_digest(&digest) {
            return Ok(ScoreResponse {
                item_id: Some(existing.item_id.clone()),
                predictions: existing.predictions.clone(),
                type_scores: existing.type_scores.clone(),
            });
        }
        let item = TriageItem {
            item_id: inner.state.next_item_id(),
            subreddit: req.subreddit.clone(),
            conversation,
            predictions: scores.predictions,
            type_scores: scores.type_scores,
            status: ItemStatus::Pending,
            created_at: (self.clock)(),
            payload_digest: digest,
            decision: None,
        };
        let record = LogRecord::Flagged { item: item.clone() };
        inner.log.append(&record)?;
        inner.state.apply(&record).map_err(ServiceError::Internal)?;
        Ok(ScoreResponse {
            item_id: Some(item.item_id),
            predictions: item.predictions,
            type_scores: item.type_scores,
        })
    }

    pub fn decide(&self, req: &DecisionRequest) -> Result<TriageItem, ServiceError> {
        if req.actor.trim().is_empty() {
            return Err(ServiceError::BadRequest("actor is required".into()));
        }
        let mut inner = self.lock();
        let item = inner
            .state
            .get(&req.item_id)
            .ok_or_else(|| ServiceError::UnknownItem(req.item_id.clone()))?;
        if item.status != ItemStatus::Pending {
            return Err(ServiceError::Conflict(format!(
                "item {} is already {:?}",
                item.item_id, item.status
            )));
        }
        if let Some(idx) = req.rule_index {
            if req.action == DecisionAction::Approve {
                return Err(ServiceError::BadRequest("rule_index only applies to remove".into()));
            }
            if self.rules.get(&item.subreddit, idx).is_none() {
                return Err(ServiceError::BadRequest(format!(
                    "r/{} has no rule {idx}",
                    item.subreddit
                )));
            }
        }
        let at = (self.clock)().max(item.created_at);
        let record = LogRecord::Decided {
            item_id: req.item_id.clone(),
            action: req.action,
            rule_index: req.rule_index,
            actor: req.actor.clone(),
            at,
        };
        inner.log.append(&record)?;
        inner.state.apply(&record).map_err(ServiceError::Internal)?;
        let item = inner.state.get(&req.item_id).expect("just decided").clone();
        if let Some(w) = &mut inner.export {
            let example = LabeledExample::from_item(&item).expect("decided item");
            serde_json::to_writer(&mut *w, &example).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(item)
    }

    /// Pending items after `cursor`, in queue order.
    pub fn queue(&self, cursor: Option<&str>, limit: Option<usize>) -> Result<QueuePage, ServiceError> {
        let limit = limit.unwrap_or(DEFAULT_PAGE);
        if limit == 0 || limit > MAX_PAGE {
            return Err(ServiceError::BadRequest(format!("limit must be within 1..={MAX_PAGE}")));
        }
        let after = cursor.filter(|c| !c.is_empty()).map(decode_cursor).transpose()?;
        let inner = self.lock();
        let mut rest = inner
            .state
            .pending_sorted()
            .into_iter()
            .filter(|i| after.as_ref().is_none_or(|a| &queue_key(i) > a))
            .peekable();
        let items: Vec<TriageItem> = rest.by_ref().take(limit).cloned().collect();
        let next_cursor = match (rest.peek(), items.last()) {
            (Some(_), Some(last)) => Some(encode_cursor(last)),
            _ => None,
        };
        Ok(QueuePage { items, next_cursor })
    }

    pub fn rules(&self, subreddit: &str) -> Result<RulesResponse, ServiceError> {
        let rules = self.rules.rules_for(subreddit);
        if rules.is_empty() {
            return Err(ServiceError::UnknownSubreddit(subreddit.to_string()));
        }
        Ok(RulesResponse {
            subreddit: subreddit.to_string(),
            rules: rules
                .iter()
                .map(|r| RuleView {
                    rule_index: r.rule_index,
                    short_name: r.short_name.clone(),
                    description: r.description.clone(),
                    text: r.text(),
                    coarse_types: r.coarse_types().iter().copied().collect(),
                })
                .collect(),
        })
    }

    /// Current state of every item, keyed by id.
    pub fn snapshot(&self) -> BTreeMap<String, TriageItem> {
        self.lock().state.items().clone()
    }

    /// One retraining example per decided item.
    pub fn exports(&self) -> Vec<LabeledExample> {
        self.lock()
            .state
            .items()
            .values()
            .filter_map(LabeledExample::from_item)
            .collect()
    }

    pub fn log_len(&self) -> usize {
        self.lock().log.len()
    }
}
