use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::item::{DecisionAction, DecisionInfo, ItemStatus, TriageItem};

/// One line of the decision log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogRecord {
    Flagged {
        item: TriageItem,
    },
    Decided {
        item_id: String,
        action: DecisionAction,
        rule_index: Option<u32>,
        actor: String,
        at: i64,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("decision log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("decision log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("decision log record {record}: {message}")]
    Replay { record: usize, message: String },
}

/// Append-only newline-delimited log. Without a file it only counts.
#[derive(Debug)]
pub struct DecisionLog {
    writer: Option<BufWriter<File>>,
    records: usize,
}

impl DecisionLog {
    pub fn in_memory() -> Self {
        DecisionLog {
            writer: None,
            records: 0,
        }
    }

    /// Opens `path` for appending and returns the records already in it.
    pub fn open(path: &Path) -> Result<(Self, Vec<LogRecord>), LogError> {
        let existing = if path.exists() {
            read_log(BufReader::new(File::open(path)?))?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            DecisionLog {
                writer: Some(BufWriter::new(file)),
                records: existing.len(),
            },
            existing,
        ))
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), LogError> {
        if let Some(w) = &mut self.writer {
            serde_json::to_writer(&mut *w, record).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.records += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }
}

pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| LogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Item states rebuilt from log records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueueState {
    items: BTreeMap<String, TriageItem>,
    by_digest: HashMap<String, String>,
    next_seq: u64,
}

impl QueueState {
    pub fn replay(records: &[LogRecord]) -> Result<Self, LogError> {
        let mut state = QueueState::default();
        for (i, r) in records.iter().enumerate() {
            state.apply(r).map_err(|message| LogError::Replay { record: i, message })?;
        }
        Ok(state)
    }

    /// Applies one record, refusing anything the live service would refuse.
    pub fn apply(&mut self, record: &LogRecord) -> Result<(), String> {
        match record {
            LogRecord::Flagged { item } => {
                if self.items.contains_key(&item.item_id) {
                    return Err(format!("item {} flagged twice", item.item_id));
                }
                if item.status != ItemStatus::Pending {
                    return Err(format!("item {} flagged as {:?}", item.item_id, item.status));
                }
                if let Some(seq) = item_seq(&item.item_id) {
                    self.next_seq = self.next_seq.max(seq + 1);
                }
                self.by_digest
                    .insert(item.payload_digest.clone(), item.item_id.clone());
                self.items.insert(item.item_id.clone(), item.clone());
            }
            LogRecord::Decided {
                item_id,
                action,
                rule_index,
                actor,
                at,
            } => {
                let item = self
                    .items
                    .get_mut(item_id)
                    .ok_or_else(|| format!("decision for unknown item {item_id}"))?;
                if item.status != ItemStatus::Pending {
                    return Err(format!("item {item_id} decided twice"));
                }
                if *at < item.created_at {
                    return Err(format!("item {item_id} decided before it was flagged"));
                }
                item.status = action.status();
                item.decision = Some(DecisionInfo {
                    actor: actor.clone(),
                    decided_at: *at,
                    rule_index: *rule_index,
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, item_id: &str) -> Option<&TriageItem> {
        self.items.get(item_id)
    }

    pub fn by_digest(&self, digest: &str) -> Option<&TriageItem> {
        self.by_digest.get(digest).and_then(|id| self.items.get(id))
    }

    pub fn items(&self) -> &BTreeMap<String, TriageItem> {
        &self.items
    }

    pub fn next_item_id(&mut self) -> String {
        let id = format!("item-{:06}", self.next_seq);
        self.next_seq += 1;
        id
    }

    /// Pending items, highest top probability first, then by id.
    pub fn pending_sorted(&self) -> Vec<&TriageItem> {
        let mut v: Vec<&TriageItem> = self
            .items
            .values()
            .filter(|i| i.status == ItemStatus::Pending)
            .collect();
        v.sort_by(|a, b| queue_key(a).cmp(&queue_key(b)));
        v
    }
}

fn item_seq(id: &str) -> Option<u64> {
    id.strip_prefix("item-")?.parse().ok()
}

/// Sort key of the queue: descending probability, ascending id.
pub(crate) fn queue_key(item: &TriageItem) -> (std::cmp::Reverse<u64>, String) {
    (std::cmp::Reverse(order_bits(item.top_probability())), item.item_id.clone())
}

/// Order-preserving bits of a non-negative probability.
pub(crate) fn order_bits(p: f64) -> u64 {
    p.max(0.0).to_bits()
}
