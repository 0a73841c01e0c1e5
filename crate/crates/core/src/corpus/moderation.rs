use std::sync::OnceLock;

use regex::Regex;
use tracing::debug;

use super::rules::CommunityRule;
use super::{Comment, MatchMethod};

/// Shortest normalized rule text accepted for verbatim matching.
const MIN_VERBATIM_LEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuleMatch {
    pub rule_index: u32,
    pub method: MatchMethod,
}

fn rule_number_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"(?i)\brule[\s\p{P}]*(\d{1,2})\b").expect("static pattern")
    })
}

/// Lowercases, trims punctuation at word boundaries and collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn contains_phrase(haystack: &str, needle: &str) -> bool {
    format!(" {haystack} ").contains(&format!(" {needle} "))
}

/// Finds which of `rules` a moderator's comment cites.
///
/// A rule-number phrase ("removed for Rule 2") resolving to an existing rule
/// wins over verbatim quoting of a rule's short name or description. Among
/// verbatim matches the longest quoted text wins, then the lower rule index.
/// Comments not written by a moderator never match.
pub fn detect_moderation_event(comment: &Comment, rules: &[CommunityRule]) -> Option<RuleMatch> {
    if !comment.author_is_moderator {
        return None;
    }
    let body = comment.body.as_deref()?;
    let rules: Vec<&CommunityRule> = rules
        .iter()
        .filter(|r| r.subreddit == comment.subreddit)
        .collect();

    for caps in rule_number_pattern().captures_iter(body) {
        let index: u32 = caps[1].parse().expect("pattern captures digits");
        if rules.iter().any(|r| r.rule_index == index) {
            return Some(RuleMatch {
                rule_index: index,
                method: MatchMethod::RuleNumberPhrase,
            });
        }
        debug!(comment = %comment.comment_id, index, "cited rule number does not exist");
    }

    let normalized = normalize_text(body);
    let mut best: Option<(usize, u32)> = None;
    for r in &rules {
        for candidate in [&r.description, &r.short_name] {
            let text = normalize_text(candidate);
            if text.len() < MIN_VERBATIM_LEN || !contains_phrase(&normalized, &text) {
                continue;
            }
            let better = match best {
                None => true,
                Some((len, idx)) => text.len() > len || (text.len() == len && r.rule_index < idx),
            };
            if better {
                best = Some((text.len(), r.rule_index));
            }
        }
    }
    best.map(|(_, rule_index)| RuleMatch {
        rule_index,
        method: MatchMethod::VerbatimRuleText,
    })
}
