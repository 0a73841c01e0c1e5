//! Tokenization and feature hashing for the utterance encoder.

use serde::{Deserialize, Serialize};

/// Literal separator between the two segments of a pair input.
pub const SEPARATOR: &str = "[SEP]";

/// One utterance after hashing: one or two segments of bucket ids.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Utterance {
    pub segments: Vec<Vec<u32>>,
}

/// A model input: utterances in conversation order, the last one being the
/// comment under judgement.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EncodedInput {
    pub utterances: Vec<Utterance>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub buckets: u32,
    /// Per-segment token budget; older tokens are dropped first.
    pub max_tokens: usize,
    pub bigrams: bool,
    /// Encode a leading `r/<community>` token of a single-segment text as a
    /// second, conditioning segment.
    #[serde(default)]
    pub community_segment: bool,
}

impl Default for Featurizer {
    fn default() -> Self {
        Featurizer {
            buckets: 4096,
            max_tokens: 128,
            bigrams: true,
            community_segment: true,
        }
    }
}

/// Splits `r/<name> rest` into (`r/<name>`, `rest`).
fn community_prefix(text: &str) -> Option<(&str, &str)> {
    let trimmed = text.trim_start();
    let rest = trimmed.strip_prefix("r/")?;
    let end = rest
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    if end == 0 {
        return None;
    }
    let split = 2 + end;
    Some((&trimmed[..split], &trimmed[split..]))
}

impl Featurizer {
    pub fn encode_utterance(&self, text: &str) -> Utterance {
        if self.community_segment && !text.contains(SEPARATOR) {
            if let Some((community, rest)) = community_prefix(text) {
                return Utterance {
                    segments: vec![self.encode_segment(rest), self.encode_segment(community)],
                };
            }
        }
        let segments = text
            .split(SEPARATOR)
            .take(2)
            .map(|seg| self.encode_segment(seg))
            .collect();
        Utterance { segments }
    }

    pub fn encode(&self, utterances: &[String]) -> EncodedInput {
        EncodedInput {
            utterances: utterances.iter().map(|u| self.encode_utterance(u)).collect(),
        }
    }

    fn encode_segment(&self, text: &str) -> Vec<u32> {
        let mut tokens = tokenize(text);
        if tokens.len() > self.max_tokens {
            tokens.drain(..tokens.len() - self.max_tokens);
        }
        let mut ids: Vec<u32> = tokens.iter().map(|t| self.bucket(t.as_bytes())).collect();
        if self.bigrams {
            for pair in tokens.windows(2) {
                let joined = format!("{}\u{1f}{}", pair[0], pair[1]);
                ids.push(self.bucket(joined.as_bytes()));
            }
        }
        ids
    }

    fn bucket(&self, bytes: &[u8]) -> u32 {
        (fnv1a(bytes) % u64::from(self.buckets)) as u32
    }
}

/// Lowercased whitespace tokens with boundary punctuation stripped.
/// Community prefixes such as `r/AskReddit` survive as one token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '_')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
