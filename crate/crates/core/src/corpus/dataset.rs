use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Conversation;
use crate::taxonomy::CoarseRuleType;

/// A conversation in the dataset, moderated or control.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub conversation: Conversation,
    /// Set when the removed comment's text could not be recovered; the
    /// thread is kept for forecasting-style use. Controls inherit the flag
    /// of the target they are paired with.
    pub forecast_only: bool,
    /// For controls, the removed comment id of the paired target.
    pub paired_with: Option<String>,
    /// Union of the coarse types of every rule the conversation violates.
    /// Empty for controls.
    pub violation_types: BTreeSet<CoarseRuleType>,
}

impl DatasetEntry {
    /// Final comment id, unique within a dataset.
    pub fn id(&self) -> &str {
        &self.conversation.final_comment.comment_id
    }

    pub fn moderated(&self) -> bool {
        self.conversation.moderated()
    }

    pub fn subreddit(&self) -> &str {
        self.conversation.subreddit()
    }

    /// Id of the moderated conversation this entry belongs with.
    pub fn group(&self) -> &str {
        self.paired_with.as_deref().unwrap_or(self.id())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
    /// Pseudonyms of moderators whose comments produced an event.
    pub moderators: BTreeSet<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn moderated(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(|e| e.moderated())
    }

    pub fn controls(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(|e| !e.moderated())
    }

    pub fn subreddits(&self) -> BTreeSet<&str> {
        self.entries.iter().map(DatasetEntry::subreddit).collect()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetEntry> {
        self.entries.iter().find(|e| e.id() == id)
    }

    /// Entries usable for training text models: everything except
    /// conversations whose removed text is missing, and their controls.
    pub fn trainable(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(|e| !e.forecast_only)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, dev: 0.1 }
    }
}

/// Entry indices per partition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub seed: u64,
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    pub fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.train.iter().chain(&self.dev).chain(&self.test).copied()
    }

    pub fn select<'a>(&self, dataset: &'a Dataset, part: &[usize]) -> Vec<&'a DatasetEntry> {
        part.iter().map(|&i| &dataset.entries[i]).collect()
    }
}

/// Seeded random train/dev/test split. A moderated conversation and its
/// controls always land in the same partition. Forecast-only entries are
/// left out.
pub fn split_dataset(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> DataSplit {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in dataset.entries.iter().enumerate() {
        if !e.forecast_only {
            groups.entry(e.group()).or_default().push(i);
        }
    }
    let mut keys: Vec<&str> = groups.keys().copied().collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = keys.len();
    let n_train = (fractions.train * n as f64).round() as usize;
    let n_dev = ((fractions.dev * n as f64).round() as usize).min(n - n_train.min(n));
    let mut split = DataSplit {
        seed,
        ..DataSplit::default()
    };
    for (rank, key) in keys.iter().enumerate() {
        let part = if rank < n_train {
            &mut split.train
        } else if rank < n_train + n_dev {
            &mut split.dev
        } else {
            &mut split.test
        };
        part.extend(&groups[key]);
    }
    split.train.sort_unstable();
    split.dev.sort_unstable();
    split.test.sort_unstable();
    split
}
