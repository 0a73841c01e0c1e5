//! Small labeled datasets isolating one signal each.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{filler, marker, plant};
use crate::corpus::{
    Comment, CommunityRule, Conversation, Dataset, DatasetEntry, MatchMethod, ModerationEvent,
    RuleBook,
};
use crate::taxonomy::{CoarseRuleType, FineRuleType};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Moderated conversations; each gets one control.
    pub moderated: usize,
    /// Maximum number of comments between post and final comment.
    pub max_chain: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            moderated: 400,
            max_chain: 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub dataset: Dataset,
    pub rules: RuleBook,
    /// The coarse type all violations in the scenario belong to.
    pub coarse_type: CoarseRuleType,
}

/// Violation in `alpha`, banter in `beta`.
pub const CONDITIONAL_MARKER: &str = "you absolute muppet";
/// Violation in `beta`, banter in `alpha`.
pub const OTHER_MARKER: &str = "what a clown";
/// Phrase appearing only in the turn before a violating reply.
pub const HISTORY_MARKER: &str = "reply with your worst insult";

struct Maker {
    rng: ChaCha8Rng,
    next: usize,
    cfg: ScenarioConfig,
}

impl Maker {
    fn new(cfg: ScenarioConfig) -> Self {
        Maker {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            next: 0,
            cfg,
        }
    }

    fn comment(&mut self, subreddit: &str, parent: Option<&Comment>, post_id: Option<&str>, body: String) -> Comment {
        self.next += 1;
        let id = format!("s_{:06}", self.next);
        Comment {
            comment_id: id.clone(),
            parent_id: parent.map(|p| p.comment_id.clone()),
            post_id: post_id.map(str::to_string).unwrap_or(id),
            subreddit: subreddit.to_string(),
            author_pseudonym: format!("user_{:04}", self.rng.random_range(0..500)),
            body: Some(body),
            created_utc: 1_650_000_000 + self.next as i64,
            removed: false,
            author_is_moderator: false,
        }
    }

    /// Post, a chain of `history.len()` comments, then the final comment.
    fn conversation(&mut self, subreddit: &str, history: Vec<String>, final_text: String) -> Conversation {
        let opening = filler(&mut self.rng, 5, 10);
        let post = self.comment(subreddit, None, None, opening);
        let post_id = post.comment_id.clone();
        let mut chain = Vec::new();
        let mut parent = post.clone();
        for text in history {
            let c = self.comment(subreddit, Some(&parent), Some(&post_id), text);
            parent = c.clone();
            chain.push(c);
        }
        let final_comment = self.comment(subreddit, Some(&parent), Some(&post_id), final_text);
        Conversation {
            post,
            chain,
            final_comment,
            moderation_event: None,
        }
    }

    fn history(&mut self, len: usize) -> Vec<String> {
        (0..len).map(|_| filler(&mut self.rng, 4, 12)).collect()
    }

    fn chain_len(&mut self) -> usize {
        self.rng.random_range(0..=self.cfg.max_chain)
    }

    fn text_with(&mut self, phrase: Option<&str>) -> String {
        let base = filler(&mut self.rng, 4, 12);
        match phrase {
            Some(p) => plant(&mut self.rng, &base, p),
            None => base,
        }
    }
}

fn moderate(conv: &mut Conversation, rule: &CommunityRule) {
    conv.final_comment.removed = true;
    conv.moderation_event = Some(ModerationEvent {
        moderation_comment_id: format!("{}_mod", conv.final_comment.comment_id),
        removed_comment_id: conv.final_comment.comment_id.clone(),
        matched_rule: rule.reference(),
        match_method: MatchMethod::RuleNumberPhrase,
        additional_rules: Vec::new(),
        violation_types: rule.coarse_types().clone(),
    });
}

fn civility_rules(subreddits: &[&str]) -> RuleBook {
    let mut book = RuleBook::new();
    for sub in subreddits {
        let rules = [
            CommunityRule::new(*sub, 1, "Be civil", "Be civil and respectful to other users")
                .with_types([FineRuleType::Personality]),
            CommunityRule::new(*sub, 2, "No spam", "No spam or repetitive posting of the same content")
                .with_types([FineRuleType::Spam]),
            CommunityRule::new(*sub, 3, "Stay on topic", "Posts must be related to the subject of this subreddit")
                .with_types([FineRuleType::OffTopic]),
        ];
        for r in rules {
            book.insert(r).expect("fresh indices");
        }
    }
    book
}

fn push_pair(entries: &mut Vec<DatasetEntry>, target: Conversation, control: Conversation) {
    let group = target.final_comment.comment_id.clone();
    let types = target
        .moderation_event
        .as_ref()
        .map(|e| e.violation_types.clone())
        .unwrap_or_default();
    entries.push(DatasetEntry {
        conversation: target,
        forecast_only: false,
        paired_with: None,
        violation_types: types,
    });
    entries.push(DatasetEntry {
        conversation: control,
        forecast_only: false,
        paired_with: Some(group),
        violation_types: BTreeSet::new(),
    });
}

/// Two communities disagree about two phrases. In `alpha` the conditional
/// marker is a civility violation and the other marker is banter; in `beta`
/// the roles are swapped. Every final comment carries one of the two
/// phrases, so without the community name the text is uninformative.
pub fn community_conditional(cfg: ScenarioConfig) -> Scenario {
    let mut m = Maker::new(cfg);
    let rules = civility_rules(&["alpha", "beta"]);
    let mut entries = Vec::new();
    for i in 0..cfg.moderated {
        let (sub, violation, banter) = if i % 2 == 0 {
            ("alpha", CONDITIONAL_MARKER, OTHER_MARKER)
        } else {
            ("beta", OTHER_MARKER, CONDITIONAL_MARKER)
        };
        let rule = rules.get(sub, 1).expect("civility rule").clone();
        let (len_t, len_c) = (m.chain_len(), m.chain_len());
        let (ht, hc) = (m.history(len_t), m.history(len_c));
        let (ft, fc) = (m.text_with(Some(violation)), m.text_with(Some(banter)));
        let mut target = m.conversation(sub, ht, ft);
        moderate(&mut target, &rule);
        let control = m.conversation(sub, hc, fc);
        push_pair(&mut entries, target, control);
    }
    Scenario {
        dataset: Dataset {
            entries,
            moderators: BTreeSet::new(),
        },
        rules,
        coarse_type: CoarseRuleType::Incivility,
    }
}

/// Violating replies look like any other reply; the only signal is a
/// provocation in the preceding turn.
pub fn history_only(cfg: ScenarioConfig) -> Scenario {
    let mut m = Maker::new(cfg);
    let rules = civility_rules(&["alpha", "beta"]);
    let mut entries = Vec::new();
    for i in 0..cfg.moderated {
        let sub = if i % 2 == 0 { "alpha" } else { "beta" };
        let rule = rules.get(sub, 1).expect("civility rule").clone();
        let len_t = m.rng.random_range(1..=cfg.max_chain.max(1));
        let len_c = m.rng.random_range(1..=cfg.max_chain.max(1));
        let mut ht = m.history(len_t);
        let last = ht.len() - 1;
        ht[last] = m.text_with(Some(HISTORY_MARKER));
        let hc = m.history(len_c);
        let (ft, fc) = (m.text_with(None), m.text_with(None));
        let mut target = m.conversation(sub, ht, ft);
        moderate(&mut target, &rule);
        let control = m.conversation(sub, hc, fc);
        push_pair(&mut entries, target, control);
    }
    Scenario {
        dataset: Dataset {
            entries,
            moderators: BTreeSet::new(),
        },
        rules,
        coarse_type: CoarseRuleType::Incivility,
    }
}

/// Invented topic words, one per rule of [`rule_linked`].
pub const TOPIC_KEYWORDS: [&str; 24] = [
    "glimmerwick", "zorbule", "quibbet", "frondle", "maxtrop", "snerdle", "plovan", "driskle",
    "varnow", "kelpish", "trumble", "oxwhist", "brindal", "yelvish", "carmott", "pezzle",
    "hoxley", "wembril", "tadrow", "fuscane", "grolby", "nimwert", "sprocken", "lurvid",
];

/// Four communities of six topic-ban rules each. A violating comment
/// mentions the banned topic of the rule it breaks; controls mention none.
pub fn rule_linked(cfg: ScenarioConfig) -> Scenario {
    let mut m = Maker::new(cfg);
    let subs = ["alpha", "beta", "gamma", "delta"];
    let mut rules = RuleBook::new();
    for (s, sub) in subs.iter().enumerate() {
        for k in 0..6 {
            let kw = TOPIC_KEYWORDS[s * 6 + k];
            let rule = CommunityRule::new(*sub, k as u32 + 1, format!("No {kw} posts"), format!("Discussion of {kw} belongs in another community"))
                .with_types([FineRuleType::OffTopic]);
            rules.insert(rule).expect("fresh indices");
        }
    }
    let mut entries = Vec::new();
    for i in 0..cfg.moderated {
        let sub = subs[i % subs.len()];
        let k = m.rng.random_range(0..6usize);
        let rule = rules.get(sub, k as u32 + 1).expect("rule exists").clone();
        let kw = TOPIC_KEYWORDS[(i % subs.len()) * 6 + k];
        let (len_t, len_c) = (m.chain_len(), m.chain_len());
        let (ht, hc) = (m.history(len_t), m.history(len_c));
        let ft = m.text_with(Some(kw));
        let fc = m.text_with(None);
        let mut target = m.conversation(sub, ht, ft);
        moderate(&mut target, &rule);
        let control = m.conversation(sub, hc, fc);
        push_pair(&mut entries, target, control);
    }
    Scenario {
        dataset: Dataset {
            entries,
            moderators: BTreeSet::new(),
        },
        rules,
        coarse_type: CoarseRuleType::OffTopic,
    }
}

/// 25 civility violations and 25 controls for memorization checks.
pub fn overfit_set(seed: u64) -> Scenario {
    let cfg = ScenarioConfig {
        seed,
        moderated: 25,
        max_chain: 3,
    };
    let mut m = Maker::new(cfg);
    let rules = civility_rules(&["alpha", "beta"]);
    let mut entries = Vec::new();
    for i in 0..cfg.moderated {
        let sub = if i % 2 == 0 { "alpha" } else { "beta" };
        let rule = rules.get(sub, 1).expect("civility rule").clone();
        let (len_t, len_c) = (m.chain_len(), m.chain_len());
        let (ht, hc) = (m.history(len_t), m.history(len_c));
        let ft = m.text_with(Some(marker(CoarseRuleType::Incivility)));
        let fc = m.text_with(None);
        let mut target = m.conversation(sub, ht, ft);
        moderate(&mut target, &rule);
        let control = m.conversation(sub, hc, fc);
        push_pair(&mut entries, target, control);
    }
    Scenario {
        dataset: Dataset {
            entries,
            moderators: BTreeSet::new(),
        },
        rules,
        coarse_type: CoarseRuleType::Incivility,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditional_marker_appears_on_both_sides() {
        let s = community_conditional(ScenarioConfig::default());
        let with_marker = |moderated: bool| {
            s.dataset
                .entries
                .iter()
                .filter(|e| e.moderated() == moderated)
                .filter(|e| e.conversation.final_comment.text().contains(CONDITIONAL_MARKER))
                .count()
        };
        assert_eq!(with_marker(true), 200);
        assert_eq!(with_marker(false), 200);
    }

    #[test]
    fn history_marker_never_in_final_comment() {
        let s = history_only(ScenarioConfig::default());
        for e in &s.dataset.entries {
            assert!(!e.conversation.final_comment.text().contains(HISTORY_MARKER));
            let in_history = e.conversation.chain.iter().any(|c| c.text().contains(HISTORY_MARKER));
            assert_eq!(in_history, e.moderated());
        }
    }

    #[test]
    fn rule_linked_violations_mention_their_rule() {
        let s = rule_linked(ScenarioConfig::default());
        for e in s.dataset.moderated() {
            let ev = e.conversation.moderation_event.as_ref().unwrap();
            let rule = s.rules.resolve(&ev.matched_rule).unwrap();
            let kw = rule.short_name.split_whitespace().nth(1).unwrap();
            assert!(e.conversation.final_comment.text().contains(kw));
        }
        for e in s.dataset.controls() {
            assert!(!TOPIC_KEYWORDS.iter().any(|k| e.conversation.final_comment.text().contains(k)));
        }
    }

    #[test]
    fn overfit_set_has_fifty_examples() {
        let s = overfit_set(3);
        assert_eq!(s.dataset.len(), 50);
        assert_eq!(s.dataset.moderated().count(), 25);
    }
}
