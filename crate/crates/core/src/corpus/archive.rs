use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArchiveError {
    #[error("archive transport failure: {0}")]
    Transport(String),
}

/// Source of original comment text for removed comments.
pub trait ArchiveClient: Send + Sync {
    /// `Ok(None)` means the archive answered and does not hold the comment.
    fn fetch(&self, comment_id: &str) -> Result<Option<String>, ArchiveError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveConfig {
    pub base_endpoint: String,
    /// Extra attempts after the first transport failure.
    pub retries: u32,
    pub timeout_ms: u64,
}

impl Default for ArchiveConfig {
    fn default() -> Self {
        ArchiveConfig {
            base_endpoint: "https://api.pushshift.io/reddit".to_string(),
            retries: 2,
            timeout_ms: 10_000,
        }
    }
}

impl ArchiveConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Archive backed by a local newline-delimited `{"id", "body"}` file.
#[derive(Clone, Debug, Default)]
pub struct FileArchive {
    bodies: HashMap<String, String>,
}

#[derive(Deserialize)]
struct ArchivedBody {
    id: String,
    body: String,
}

impl FileArchive {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut bodies = HashMap::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ArchivedBody = serde_json::from_str(&line)?;
            bodies.insert(rec.id, rec.body);
        }
        Ok(FileArchive { bodies })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        FileArchive {
            bodies: pairs.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }
}

impl ArchiveClient for FileArchive {
    fn fetch(&self, comment_id: &str) -> Result<Option<String>, ArchiveError> {
        Ok(self.bodies.get(comment_id).cloned())
    }
}

/// Fetches a removed comment's original text, retrying transport failures
/// `config.retries` times. Gives up with `None` and a warning.
pub fn fetch_removed_body(
    comment_id: &str,
    client: &dyn ArchiveClient,
    config: &ArchiveConfig,
) -> Option<String> {
    let attempts = config.retries + 1;
    for attempt in 1..=attempts {
        match client.fetch(comment_id) {
            Ok(body) => return body,
            Err(e) => {
                warn!(comment = comment_id, attempt, attempts, error = %e, "archive fetch failed");
            }
        }
    }
    None
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Fails the first `failures` calls, then serves from a fixed map.
    pub struct ScriptedArchive {
        pub failures: Mutex<u32>,
        pub inner: FileArchive,
    }

    impl ArchiveClient for ScriptedArchive {
        fn fetch(&self, id: &str) -> Result<Option<String>, ArchiveError> {
            let mut left = self.failures.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(ArchiveError::Transport("connection reset".into()));
            }
            self.inner.fetch(id)
        }
    }

    fn archive() -> FileArchive {
        FileArchive::from_reader(&br#"{"id": "c1", "body": "original text"}"#[..]).unwrap()
    }

    #[test]
    fn present_and_absent() {
        let cfg = ArchiveConfig::default();
        assert_eq!(fetch_removed_body("c1", &archive(), &cfg).as_deref(), Some("original text"));
        assert_eq!(fetch_removed_body("c2", &archive(), &cfg), None);
    }

    #[test]
    fn transient_failure_then_success() {
        let client = ScriptedArchive {
            failures: Mutex::new(2),
            inner: archive(),
        };
        let cfg = ArchiveConfig {
            retries: 2,
            ..ArchiveConfig::default()
        };
        assert_eq!(fetch_removed_body("c1", &client, &cfg).as_deref(), Some("original text"));
    }

    #[test]
    fn retries_exhausted() {
        let client = ScriptedArchive {
            failures: Mutex::new(3),
            inner: archive(),
        };
        let cfg = ArchiveConfig {
            retries: 2,
            ..ArchiveConfig::default()
        };
        assert_eq!(fetch_removed_body("c1", &client, &cfg), None);
    }
}
