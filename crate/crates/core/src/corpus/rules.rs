use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::taxonomy::{coarsen, CoarseRuleType, FineRuleType};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleRef {
    pub subreddit: String,
    pub rule_index: u32,
}

/// A community's rule with its fine and coarse type labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityRule {
    pub subreddit: String,
    pub rule_index: u32,
    pub short_name: String,
    pub description: String,
    fine_types: BTreeSet<FineRuleType>,
    coarse_types: BTreeSet<CoarseRuleType>,
}

impl CommunityRule {
    pub fn new(
        subreddit: impl Into<String>,
        rule_index: u32,
        short_name: impl Into<String>,
        description: impl Into<String>,
    ) -> Self {
        CommunityRule {
            subreddit: subreddit.into(),
            rule_index,
            short_name: short_name.into(),
            description: description.into(),
            fine_types: BTreeSet::new(),
            coarse_types: BTreeSet::new(),
        }
    }

    pub fn with_types(mut self, fine: impl IntoIterator<Item = FineRuleType>) -> Self {
        self.set_fine_types(fine);
        self
    }

    /// Replaces the fine labels; coarse labels are always derived from them.
    pub fn set_fine_types(&mut self, fine: impl IntoIterator<Item = FineRuleType>) {
        self.fine_types = fine.into_iter().collect();
        self.coarse_types = coarsen(&self.fine_types);
    }

    pub fn fine_types(&self) -> &BTreeSet<FineRuleType> {
        &self.fine_types
    }

    pub fn coarse_types(&self) -> &BTreeSet<CoarseRuleType> {
        &self.coarse_types
    }

    pub fn reference(&self) -> RuleRef {
        RuleRef {
            subreddit: self.subreddit.clone(),
            rule_index: self.rule_index,
        }
    }

    /// `short_name: description` when both are present, otherwise whichever exists.
    pub fn text(&self) -> String {
        match (self.short_name.trim(), self.description.trim()) {
            ("", d) => d.to_string(),
            (s, "") => s.to_string(),
            (s, d) if s == d => s.to_string(),
            (s, d) => format!("{s}: {d}"),
        }
    }
}

/// On-disk rule record. Type labels are optional and filled in by rule mapping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub subreddit: String,
    pub rule_index: u32,
    pub short_name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub fine_types: BTreeSet<FineRuleType>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub coarse_types: BTreeSet<CoarseRuleType>,
}

impl From<&CommunityRule> for RuleRecord {
    fn from(r: &CommunityRule) -> Self {
        RuleRecord {
            subreddit: r.subreddit.clone(),
            rule_index: r.rule_index,
            short_name: r.short_name.clone(),
            description: r.description.clone(),
            fine_types: r.fine_types.clone(),
            coarse_types: r.coarse_types.clone(),
        }
    }
}

impl From<RuleRecord> for CommunityRule {
    fn from(r: RuleRecord) -> Self {
        // stored coarse labels are ignored: they are always recomputed
        CommunityRule::new(r.subreddit, r.rule_index, r.short_name, r.description)
            .with_types(r.fine_types)
    }
}

/// Rules grouped by community, ordered by rule index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleBook {
    by_subreddit: BTreeMap<String, Vec<CommunityRule>>,
}

impl RuleBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rules(rules: impl IntoIterator<Item = CommunityRule>) -> Result<Self, CorpusError> {
        let mut book = RuleBook::new();
        for r in rules {
            book.insert(r)?;
        }
        Ok(book)
    }

    pub fn insert(&mut self, rule: CommunityRule) -> Result<(), CorpusError> {
        if rule.rule_index == 0 {
            return Err(CorpusError::ZeroRuleIndex(rule.subreddit));
        }
        let list = self.by_subreddit.entry(rule.subreddit.clone()).or_default();
        match list.binary_search_by_key(&rule.rule_index, |r| r.rule_index) {
            Ok(_) => Err(CorpusError::DuplicateRule {
                subreddit: rule.subreddit,
                rule_index: rule.rule_index,
            }),
            Err(pos) => {
                list.insert(pos, rule);
                Ok(())
            }
        }
    }

    pub fn rules_for(&self, subreddit: &str) -> &[CommunityRule] {
        self.by_subreddit
            .get(subreddit)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn get(&self, subreddit: &str, rule_index: u32) -> Option<&CommunityRule> {
        let rules = self.rules_for(subreddit);
        rules
            .binary_search_by_key(&rule_index, |r| r.rule_index)
            .ok()
            .map(|i| &rules[i])
    }

    pub fn resolve(&self, r: &RuleRef) -> Option<&CommunityRule> {
        self.get(&r.subreddit, r.rule_index)
    }

    pub fn subreddits(&self) -> impl Iterator<Item = &str> {
        self.by_subreddit.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CommunityRule> {
        self.by_subreddit.values().flatten()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut CommunityRule> {
        self.by_subreddit.values_mut().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_subreddit.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn read_rules<R: BufRead>(reader: R) -> Result<RuleBook, CorpusError> {
    let mut book = RuleBook::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RuleRecord = serde_json::from_str(&line)?;
        book.insert(record.into())?;
    }
    Ok(book)
}

pub fn write_rules<W: Write>(book: &RuleBook, mut w: W) -> Result<(), CorpusError> {
    for rule in book.iter() {
        serde_json::to_writer(&mut w, &RuleRecord::from(rule))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_types_follow_fine_types() {
        let r = CommunityRule::new("s", 1, "Be nice", "Don't harass others")
            .with_types([FineRuleType::Harassment, FineRuleType::Doxxing, FineRuleType::Voting]);
        assert_eq!(
            r.coarse_types(),
            &BTreeSet::from([CoarseRuleType::Harassment, CoarseRuleType::MetaRules])
        );
    }

    #[test]
    fn duplicate_index_rejected() {
        let mut book = RuleBook::new();
        book.insert(CommunityRule::new("s", 2, "a", "b")).unwrap();
        assert!(matches!(
            book.insert(CommunityRule::new("s", 2, "c", "d")),
            Err(CorpusError::DuplicateRule { .. })
        ));
        assert!(matches!(
            book.insert(CommunityRule::new("s", 0, "c", "d")),
            Err(CorpusError::ZeroRuleIndex(_))
        ));
        book.insert(CommunityRule::new("other", 2, "c", "d")).unwrap();
        book.insert(CommunityRule::new("s", 1, "c", "d")).unwrap();
        let idx: Vec<u32> = book.rules_for("s").iter().map(|r| r.rule_index).collect();
        assert_eq!(idx, vec![1, 2]);
    }

    #[test]
    fn rule_text_joins_name_and_description() {
        assert_eq!(
            CommunityRule::new("s", 1, "Be civil", "Be civil and respectful.").text(),
            "Be civil: Be civil and respectful."
        );
        assert_eq!(CommunityRule::new("s", 1, "", "No spam").text(), "No spam");
    }

    #[test]
    fn rules_file_round_trip() {
        let book = RuleBook::from_rules([
            CommunityRule::new("a", 1, "x", "y").with_types([FineRuleType::Spam]),
            CommunityRule::new("b", 3, "z", "w"),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_rules(&book, &mut buf).unwrap();
        assert_eq!(read_rules(buf.as_slice()).unwrap(), book);
    }
}
