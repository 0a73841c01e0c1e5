//! Seeded synthetic corpora with known ground truth.
//!
//! Violating comments carry a marker phrase for the coarse type of the rule
//! they break, so every stage of the pipeline can be checked offline.

mod scenarios;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    Comment, CommentStore, CommunityRule, CorpusError, DumpRecord, FileArchive, MatchMethod,
    RuleBook,
};
use crate::taxonomy::{builtin_catalog, AnnotatedRule, CoarseRuleType};

pub use scenarios::{
    community_conditional, history_only, overfit_set, rule_linked, Scenario, ScenarioConfig,
    CONDITIONAL_MARKER, HISTORY_MARKER, OTHER_MARKER, TOPIC_KEYWORDS,
};

/// Phrase planted in comments violating a rule of the given coarse type.
pub fn marker(t: CoarseRuleType) -> &'static str {
    match t {
        CoarseRuleType::Incivility => "you absolute muppet",
        CoarseRuleType::Harassment => "i know where you live",
        CoarseRuleType::Spam => "buy cheap followers now",
        CoarseRuleType::Format => "untagged wall of text",
        CoarseRuleType::Content => "graphic gore spoiler inside",
        CoarseRuleType::OffTopic => "anyway what about elections",
        CoarseRuleType::HateSpeech => "those people are subhuman",
        CoarseRuleType::Trolling => "lol just baiting you",
        CoarseRuleType::MetaRules => "downvote brigade incoming",
    }
}

/// Neutral vocabulary for filler text; shares no word with any marker.
pub const FILLER: [&str; 96] = [
    "the", "a", "this", "that", "it", "is", "was", "and", "or", "but", "so", "very", "quite",
    "really", "maybe", "think", "guess", "agree", "interesting", "nice", "good", "great", "fine",
    "thanks", "question", "answer", "idea", "point", "thread", "post", "photo", "recipe", "game",
    "garden", "tomato", "basil", "board", "dice", "card", "camera", "lens", "light", "shadow",
    "trail", "shoes", "pace", "mile", "wood", "plane", "chisel", "glue", "oven", "flour", "salt",
    "pepper", "season", "summer", "winter", "morning", "evening", "week", "year", "today",
    "yesterday", "tomorrow", "friend", "family", "neighbor", "city", "river", "mountain", "map",
    "book", "chapter", "page", "story", "music", "song", "guitar", "drum", "paint", "brush",
    "color", "blue", "green", "red", "small", "large", "old", "new", "simple", "tricky", "works",
    "tried", "made", "found",
];

const SUBREDDITS: [&str; 10] = [
    "gardening", "boardgames", "cooking", "photography", "running", "woodworking", "askhistory",
    "retrogaming", "birding", "knitting",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub subreddits: usize,
    pub posts_per_subreddit: usize,
    pub comments_per_post: usize,
    pub violations_per_post: usize,
    pub max_depth: usize,
    pub users: usize,
    /// Chance that a post, rather than a comment, is removed.
    pub post_violation_rate: f64,
    /// Chance a moderator quotes the rule text instead of its number.
    pub verbatim_rate: f64,
    /// Chance a second moderator reply cites another rule.
    pub second_rule_rate: f64,
    /// Chance the archive lacks a removed comment's text.
    pub archive_miss_rate: f64,
    /// Removals whose moderator reply cites no rule, per post.
    pub unmatched_removals_per_post: f64,
    /// Friendly moderator replies to regular comments, per post.
    pub noise_moderator_rate: f64,
    pub malformed_lines: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            subreddits: 6,
            posts_per_subreddit: 10,
            comments_per_post: 14,
            violations_per_post: 3,
            max_depth: 6,
            users: 240,
            post_violation_rate: 0.05,
            verbatim_rate: 0.3,
            second_rule_rate: 0.1,
            archive_miss_rate: 0.08,
            unmatched_removals_per_post: 0.2,
            noise_moderator_rate: 0.4,
            malformed_lines: 0,
        }
    }
}

/// What the generator planted for one removed comment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub removed_comment_id: String,
    pub moderation_comment_id: String,
    pub subreddit: String,
    pub rule_index: u32,
    pub method: MatchMethod,
    pub additional_rules: Vec<u32>,
    pub coarse_types: BTreeSet<CoarseRuleType>,
    pub archived: bool,
    /// Comment ids from the post to the removed comment.
    pub path: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub emitted_comments: usize,
    pub malformed_lines: usize,
    pub events: Vec<TruthEvent>,
    pub unmatched_removals: usize,
    pub noise_moderator_comments: usize,
    pub moderators: BTreeSet<String>,
    pub rules: usize,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub subreddits: Vec<String>,
    pub rules: RuleBook,
    /// In emission order: posts and comments interleaved by thread.
    pub comments: Vec<Comment>,
    /// Original text of removed comments available from the archive.
    pub archive: Vec<(String, String)>,
    pub truth: GroundTruth,
    /// Positions (line numbers before insertion) and content of broken lines.
    pub malformed: Vec<(usize, String)>,
}

impl SyntheticCorpus {
    pub fn store(&self) -> CommentStore {
        CommentStore::from_comments(self.comments.iter().cloned())
            .expect("generator emits unique ids")
    }

    pub fn archive_client(&self) -> FileArchive {
        FileArchive::from_pairs(self.archive.iter().cloned())
    }

    /// Dump lines with malformed lines interleaved.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        let mut broken = self.malformed.iter().peekable();
        for (i, c) in self.comments.iter().enumerate() {
            while let Some((_, line)) = broken.next_if(|(at, _)| *at == i) {
                writeln!(w, "{line}")?;
            }
            serde_json::to_writer(&mut w, &DumpRecord::from(c))?;
            w.write_all(b"\n")?;
        }
        for (_, line) in broken {
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_rules<W: Write>(&self, w: W) -> Result<(), CorpusError> {
        crate::corpus::write_rules(&self.rules, w)
    }

    pub fn write_archive<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for (id, body) in &self.archive {
            serde_json::to_writer(&mut w, &serde_json::json!({ "id": id, "body": body }))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_truth<W: Write>(&self, w: W) -> Result<(), CorpusError> {
        serde_json::to_writer_pretty(w, &self.truth)?;
        Ok(())
    }
}

pub(crate) fn filler<R: Rng + ?Sized>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| *FILLER.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Inserts `phrase` at a random word boundary of `text`.
pub(crate) fn plant<R: Rng + ?Sized>(rng: &mut R, text: &str, phrase: &str) -> String {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    let at = rng.random_range(0..=words.len());
    words.insert(at, phrase);
    words.join(" ")
}

fn subreddit_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let base = SUBREDDITS[i % SUBREDDITS.len()];
            if i < SUBREDDITS.len() {
                base.to_string()
            } else {
                format!("{base}{}", i / SUBREDDITS.len())
            }
        })
        .collect()
}

/// Picks a rule list covering every coarse type once, plus a few extras.
fn community_rules<R: Rng + ?Sized>(
    rng: &mut R,
    subreddit: &str,
    catalog: &[AnnotatedRule],
) -> Vec<CommunityRule> {
    let mut chosen: Vec<usize> = Vec::new();
    for t in CoarseRuleType::ALL {
        let pool: Vec<usize> = (0..catalog.len())
            .filter(|&i| catalog[i].fine_types.iter().any(|f| f.coarse() == t))
            .collect();
        chosen.push(*pool.choose(rng).expect("catalog covers every coarse type"));
    }
    let extra = rng.random_range(0..=3);
    let rest: Vec<usize> = (0..catalog.len()).filter(|i| !chosen.contains(i)).collect();
    chosen.extend(rest.choose_multiple(rng, extra));
    chosen.shuffle(rng);
    chosen
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let a = &catalog[i];
            CommunityRule::new(subreddit, k as u32 + 1, &a.short_name, &a.description)
                .with_types(a.fine_types.iter().copied())
        })
        .collect()
}

struct Builder<'a> {
    rng: ChaCha8Rng,
    cfg: &'a SyntheticConfig,
    next_id: usize,
    comments: Vec<Comment>,
    archive: Vec<(String, String)>,
    truth: GroundTruth,
}

impl Builder<'_> {
    fn id(&mut self, prefix: &str) -> String {
        self.next_id += 1;
        format!("{prefix}_{:06}", self.next_id)
    }

    fn user(&mut self) -> String {
        format!("user_{:04}", self.rng.random_range(0..self.cfg.users.max(1)))
    }

    fn moderator_reply(&mut self, parent: &Comment, mods: &[String], t: i64, body: String) -> Comment {
        let author = mods.choose(&mut self.rng).expect("moderators").clone();
        self.truth.moderators.insert(author.clone());
        Comment {
            comment_id: self.id("t1"),
            parent_id: Some(parent.comment_id.clone()),
            post_id: parent.post_id.clone(),
            subreddit: parent.subreddit.clone(),
            author_pseudonym: author,
            body: Some(body),
            created_utc: t,
            removed: false,
            author_is_moderator: true,
        }
    }

    fn citation(&mut self, rule: &CommunityRule, method: MatchMethod) -> String {
        match method {
            MatchMethod::RuleNumberPhrase => {
                let templates = [
                    "Your comment has been removed for Rule {n}.",
                    "Removed, rule #{n}. Please read the sidebar.",
                    "This comment violates Rule {n} and has been removed.",
                    "Hi, your post breaks RULE: {n}. Removed.",
                ];
                templates
                    .choose(&mut self.rng)
                    .expect("templates")
                    .replace("{n}", &rule.rule_index.to_string())
            }
            MatchMethod::VerbatimRuleText => {
                // short names below the matcher's minimum length would go undetected
                let short_ok = crate::corpus::normalize_text(&rule.short_name).len() >= 8;
                let quoted = if short_ok && self.rng.random_bool(0.5) {
                    &rule.short_name
                } else {
                    &rule.description
                };
                format!("Your comment was removed. Reminder: {quoted}")
            }
        }
    }

    fn thread(&mut self, subreddit: &str, rules: &[CommunityRule], mods: &[String], post_no: usize, next_type: &mut usize) {
        let cfg = self.cfg;
        let base = 1_600_000_000 + (post_no as i64) * 100_000;
        let post_id = self.id("t3");
        let post = Comment {
            comment_id: post_id.clone(),
            parent_id: None,
            post_id: post_id.clone(),
            subreddit: subreddit.to_string(),
            author_pseudonym: self.user(),
            body: Some(filler(&mut self.rng, 6, 14)),
            created_utc: base,
            removed: false,
            author_is_moderator: false,
        };
        let mut nodes = vec![post];
        let mut depth = vec![0usize];
        for k in 0..cfg.comments_per_post {
            let eligible: Vec<usize> = (0..nodes.len()).filter(|&i| depth[i] < cfg.max_depth).collect();
            let parent = *eligible.choose(&mut self.rng).expect("post is always eligible");
            let c = Comment {
                comment_id: self.id("t1"),
                parent_id: Some(nodes[parent].comment_id.clone()),
                post_id: post_id.clone(),
                subreddit: subreddit.to_string(),
                author_pseudonym: self.user(),
                body: Some(filler(&mut self.rng, 4, 20)),
                created_utc: base + 60 * (k as i64 + 1),
                removed: false,
                author_is_moderator: false,
            };
            depth.push(depth[parent] + 1);
            nodes.push(c);
        }

        let mut picks: Vec<usize> = (1..nodes.len()).collect();
        picks.shuffle(&mut self.rng);
        picks.truncate(cfg.violations_per_post.min(nodes.len() - 1));
        if self.rng.random_bool(cfg.post_violation_rate) {
            picks.insert(0, 0);
            picks.pop();
        }
        let unmatched = {
            let whole = cfg.unmatched_removals_per_post.floor() as usize;
            whole + usize::from(self.rng.random_bool(cfg.unmatched_removals_per_post.fract()))
        };
        let mut extra = Vec::new();
        let mut late = base + 60 * (cfg.comments_per_post as i64 + 10);

        for &v in &picks {
            let t = CoarseRuleType::ALL[*next_type % CoarseRuleType::ALL.len()];
            *next_type += 1;
            let candidates: Vec<&CommunityRule> =
                rules.iter().filter(|r| r.coarse_types().contains(&t)).collect();
            let rule = (*candidates.choose(&mut self.rng).expect("every coarse type has a rule")).clone();
            let method = if self.rng.random_bool(cfg.verbatim_rate) {
                MatchMethod::VerbatimRuleText
            } else {
                MatchMethod::RuleNumberPhrase
            };
            let mut coarse = rule.coarse_types().clone();
            let base = filler(&mut self.rng, 4, 16);
            let mut text = plant(&mut self.rng, &base, marker(t));
            let second = if self.rng.random_bool(cfg.second_rule_rate) {
                let others: Vec<&CommunityRule> = rules
                    .iter()
                    .filter(|r| r.rule_index != rule.rule_index && r.coarse_types().is_disjoint(&coarse))
                    .collect();
                others.choose(&mut self.rng).map(|r| (*r).clone())
            } else {
                None
            };
            if let Some(s) = &second {
                for &st in s.coarse_types() {
                    text = plant(&mut self.rng, &text, marker(st));
                }
                coarse.extend(s.coarse_types());
            }

            let removed = &mut nodes[v];
            removed.removed = true;
            removed.body = None;
            let removed = removed.clone();
            let archived = !self.rng.random_bool(cfg.archive_miss_rate);
            if archived {
                self.archive.push((removed.comment_id.clone(), text));
            }
            late += 30;
            let body = self.citation(&rule, method);
            let reply = self.moderator_reply(&removed, mods, late, body);
            let mut event = TruthEvent {
                removed_comment_id: removed.comment_id.clone(),
                moderation_comment_id: reply.comment_id.clone(),
                subreddit: subreddit.to_string(),
                rule_index: rule.rule_index,
                method,
                additional_rules: Vec::new(),
                coarse_types: coarse,
                archived,
                path: Vec::new(),
            };
            extra.push(reply);
            if let Some(s) = second {
                late += 30;
                let body = self.citation(&s, MatchMethod::RuleNumberPhrase);
                extra.push(self.moderator_reply(&removed, mods, late, body));
                event.additional_rules.push(s.rule_index);
            }
            self.truth.events.push(event);
        }

        let clean: Vec<usize> = (1..nodes.len())
            .filter(|i| !picks.contains(i) && !nodes[*i].removed)
            .collect();
        for &u in clean.choose_multiple(&mut self.rng, unmatched) {
            let n = &mut nodes[u];
            n.removed = true;
            n.body = None;
            let n = n.clone();
            self.archive.push((n.comment_id.clone(), filler(&mut self.rng, 4, 12)));
            late += 30;
            extra.push(self.moderator_reply(&n, mods, late, "Removed.".to_string()));
            self.truth.unmatched_removals += 1;
        }
        if self.rng.random_bool(cfg.noise_moderator_rate) {
            let target = nodes[*clean.choose(&mut self.rng).unwrap_or(&0)].clone();
            if !target.removed {
                late += 30;
                extra.push(self.moderator_reply(
                    &target,
                    mods,
                    late,
                    "Thanks for contributing, glad to see this discussion!".to_string(),
                ));
                self.truth.noise_moderator_comments += 1;
            }
        }

        let index: BTreeMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.comment_id.clone(), i))
            .collect();
        let first_new = self.truth.events.len() - picks.len();
        for e in &mut self.truth.events[first_new..] {
            let mut path = vec![e.removed_comment_id.clone()];
            let mut cur = index[&e.removed_comment_id];
            while let Some(p) = &nodes[cur].parent_id {
                path.push(p.clone());
                cur = index[p];
            }
            path.reverse();
            e.path = path;
        }

        self.comments.extend(nodes);
        self.comments.extend(extra);
    }
}

/// Generates a corpus. Identical configs yield identical corpora.
pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    let catalog = builtin_catalog();
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        cfg: config,
        next_id: 0,
        comments: Vec::new(),
        archive: Vec::new(),
        truth: GroundTruth::default(),
    };
    let subreddits = subreddit_names(config.subreddits);
    let mut rules = RuleBook::new();
    let mut next_type = 0;
    let mut post_no = 0;
    for sub in &subreddits {
        let sub_rules = community_rules(&mut b.rng, sub, &catalog);
        for r in &sub_rules {
            rules.insert(r.clone()).expect("indices are fresh per community");
        }
        let mods: Vec<String> = (0..2).map(|k| format!("mod_{sub}_{k}")).collect();
        for _ in 0..config.posts_per_subreddit {
            b.thread(sub, &sub_rules, &mods, post_no, &mut next_type);
            post_no += 1;
        }
    }
    let mut malformed = Vec::new();
    for k in 0..config.malformed_lines {
        let at = b.rng.random_range(0..=b.comments.len());
        let line = if k % 2 == 0 {
            format!("{{\"id\": \"t1_broken{k}\", \"parent_id\": ")
        } else {
            "not a record at all".to_string()
        };
        malformed.push((at, line));
    }
    malformed.sort_by_key(|(at, _)| *at);
    b.truth.emitted_comments = b.comments.len();
    b.truth.malformed_lines = malformed.len();
    b.truth.rules = rules.len();
    SyntheticCorpus {
        config: config.clone(),
        subreddits,
        rules,
        comments: b.comments,
        archive: b.archive,
        truth: b.truth,
        malformed,
    }
}
