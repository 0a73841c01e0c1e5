use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::types::FineRuleType;

const CATALOG: &str = include_str!("../../data/rule_catalog.jsonl");

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("cannot read annotations: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {0}: rule has no labels")]
    Unlabeled(usize),
}

/// A rule text with its gold fine-type labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedRule {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub short_name: String,
    pub description: String,
    pub fine_types: BTreeSet<FineRuleType>,
}

impl AnnotatedRule {
    pub fn new(description: impl Into<String>, fine_types: impl IntoIterator<Item = FineRuleType>) -> Self {
        AnnotatedRule {
            short_name: String::new(),
            description: description.into(),
            fine_types: fine_types.into_iter().collect(),
        }
    }

    /// Text fed to the classifiers.
    pub fn text(&self) -> String {
        if self.short_name.is_empty() {
            self.description.clone()
        } else {
            format!("{}: {}", self.short_name, self.description)
        }
    }

    pub fn has(&self, t: FineRuleType) -> bool {
        self.fine_types.contains(&t)
    }
}

pub fn read_annotated<R: BufRead>(reader: R) -> Result<Vec<AnnotatedRule>, AnnotationError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rule: AnnotatedRule =
            serde_json::from_str(&line).map_err(|source| AnnotationError::Parse { line: i + 1, source })?;
        if rule.fine_types.is_empty() {
            return Err(AnnotationError::Unlabeled(i + 1));
        }
        out.push(rule);
    }
    Ok(out)
}

pub fn write_annotated<W: Write>(rules: &[AnnotatedRule], mut w: W) -> std::io::Result<()> {
    for r in rules {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Built-in annotated rules, several per fine type. Serves as seed training
/// data and as the rule pool of the synthetic corpus generator.
pub fn builtin_catalog() -> Vec<AnnotatedRule> {
    read_annotated(CATALOG.as_bytes()).expect("bundled catalog is valid")
}
