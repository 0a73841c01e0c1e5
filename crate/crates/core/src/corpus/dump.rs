use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{Comment, CorpusError};

/// Abort threshold for malformed dump lines.
pub const MAX_MALFORMED_RATIO: f64 = 0.10;

/// Wire form of one dump line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpRecord {
    pub id: String,
    pub parent_id: Option<String>,
    pub post_id: String,
    pub subreddit: String,
    pub author: String,
    pub body: Option<String>,
    pub created_utc: i64,
    pub removed: bool,
    pub is_moderator: bool,
}

const REMOVED_PLACEHOLDERS: [&str; 3] = ["", "[removed]", "[deleted]"];

impl From<DumpRecord> for Comment {
    fn from(r: DumpRecord) -> Self {
        let body = match r.body {
            Some(b) if r.removed && REMOVED_PLACEHOLDERS.contains(&b.trim()) => None,
            other => other,
        };
        Comment {
            comment_id: r.id,
            parent_id: r.parent_id,
            post_id: r.post_id,
            subreddit: r.subreddit,
            author_pseudonym: r.author,
            body,
            created_utc: r.created_utc,
            removed: r.removed,
            author_is_moderator: r.is_moderator,
        }
    }
}

impl From<&Comment> for DumpRecord {
    fn from(c: &Comment) -> Self {
        DumpRecord {
            id: c.comment_id.clone(),
            parent_id: c.parent_id.clone(),
            post_id: c.post_id.clone(),
            subreddit: c.subreddit.clone(),
            author: c.author_pseudonym.clone(),
            body: c.body.clone(),
            created_utc: c.created_utc,
            removed: c.removed,
            is_moderator: c.author_is_moderator,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedDump {
    pub comments: Vec<Comment>,
    pub malformed: usize,
    /// Non-blank lines read.
    pub lines: usize,
}

/// Parses a newline-delimited dump. Malformed lines are skipped and counted.
/// The parse aborts when more than one line is malformed and the malformed
/// share exceeds [`MAX_MALFORMED_RATIO`]; a single bad line (typically a
/// truncated tail) is always tolerated.
pub fn parse_dump<R: BufRead>(mut reader: R) -> Result<ParsedDump, CorpusError> {
    let mut out = ParsedDump::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let Ok(line) = std::str::from_utf8(&buf) else {
            out.lines += 1;
            out.malformed += 1;
            continue;
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.lines += 1;
        match serde_json::from_str::<DumpRecord>(line) {
            Ok(rec) if rec.parent_id.as_deref() != Some(rec.id.as_str()) => {
                out.comments.push(rec.into())
            }
            Ok(rec) => {
                warn!(id = %rec.id, "comment lists itself as parent; skipped");
                out.malformed += 1;
            }
            Err(_) => out.malformed += 1,
        }
    }
    if out.malformed > 1 && out.malformed as f64 / out.lines as f64 > MAX_MALFORMED_RATIO {
        return Err(CorpusError::TooManyMalformed {
            malformed: out.malformed,
            total: out.lines,
        });
    }
    if out.malformed > 0 {
        warn!(malformed = out.malformed, lines = out.lines, "skipped malformed dump lines");
    }
    Ok(out)
}

/// Parses several dump shards in parallel, concatenating in shard order.
pub fn parse_dump_shards<P: AsRef<Path> + Sync>(paths: &[P]) -> Result<ParsedDump, CorpusError> {
    let parts: Vec<ParsedDump> = paths
        .par_iter()
        .map(|p| parse_dump(BufReader::new(File::open(p.as_ref())?)))
        .collect::<Result<_, _>>()?;
    let mut out = ParsedDump::default();
    for p in parts {
        out.comments.extend(p.comments);
        out.malformed += p.malformed;
        out.lines += p.lines;
    }
    Ok(out)
}

pub fn write_dump<'a, W: Write>(
    comments: impl IntoIterator<Item = &'a Comment>,
    mut w: W,
) -> Result<(), CorpusError> {
    for c in comments {
        serde_json::to_writer(&mut w, &DumpRecord::from(c))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
