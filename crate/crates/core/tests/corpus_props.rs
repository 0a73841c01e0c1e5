use std::collections::BTreeSet;

use normvio_core::corpus::{
    build_corpus, control_candidates, detect_moderation_event, pair_controls, parse_dump, reconstruct_thread,
    serialize_release, BuildConfig, Comment, CommentStore, CommunityRule,
};
use normvio_core::synth::{generate, SyntheticConfig};
use proptest::prelude::*;

/// A post `p{k}` per tree; node i > 0 hangs under `parents[i - 1] % i`.
fn tree(post: usize, parents: &[usize], flags: &[(bool, bool)]) -> Vec<Comment> {
    let id = |i: usize| if i == 0 { format!("p{post}") } else { format!("p{post}_c{i}") };
    (0..=parents.len())
        .map(|i| Comment {
            comment_id: id(i),
            parent_id: (i > 0).then(|| id(parents[i - 1] % i)),
            post_id: id(0),
            subreddit: "sub".into(),
            author_pseudonym: format!("u{}", i % 5),
            body: Some(format!("text {i}")),
            created_utc: (post * 1000 + i) as i64,
            removed: i > 0 && flags[i - 1].0,
            author_is_moderator: i > 0 && flags[i - 1].1,
        })
        .collect()
}

fn forest() -> impl Strategy<Value = Vec<Comment>> {
    (1usize..25)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..1000, n),
                proptest::collection::vec((proptest::bool::weighted(0.15), proptest::bool::weighted(0.05)), n),
                proptest::collection::vec(0usize..1000, 1..6),
            )
        })
        .prop_map(|(parents, flags, other)| {
            let mut all = tree(0, &parents, &flags);
            all.extend(tree(1, &other, &vec![(false, false); other.len()]));
            all
        })
}

/// Ids from the post to `id` following parent links.
fn path(comments: &[Comment], id: &str) -> Vec<String> {
    let mut out = vec![id.to_string()];
    let mut cur = id.to_string();
    while let Some(p) = comments.iter().find(|c| c.comment_id == cur).unwrap().parent_id.clone() {
        out.push(p.clone());
        cur = p;
    }
    out.reverse();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reconstruct_inverts_flatten(comments in forest()) {
        let store = CommentStore::from_comments(comments.clone()).unwrap();
        for c in &comments {
            let conv = reconstruct_thread(&c.comment_id, &store).unwrap();
            prop_assert_eq!(conv.comment_ids(), path(&comments, &c.comment_id));
            let times: Vec<i64> = conv.utterances().iter().map(|u| u.created_utc).collect();
            prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn controls_are_few_and_share_the_post(comments in forest(), pick in 0usize..100) {
        let store = CommentStore::from_comments(comments.clone()).unwrap();
        let replies: Vec<&Comment> = comments.iter().filter(|c| c.post_id == "p0" && c.parent_id.is_some()).collect();
        let target = reconstruct_thread(&replies[pick % replies.len()].comment_id, &store).unwrap();
        let mut pool = control_candidates(&store, "p0");
        pool.extend(control_candidates(&store, "p1"));
        let picked = pair_controls(&target, &pool);
        prop_assert!(picked.len() <= 2);
        for c in &picked {
            prop_assert_eq!(c.post_id(), target.post_id());
            prop_assert!(!c.moderated());
            prop_assert!(c.utterances().iter().all(|u| !u.removed && !u.author_is_moderator));
        }
        let worst = picked.iter().map(|c| c.length().abs_diff(target.length())).max();
        let chosen: BTreeSet<&str> = picked.iter().map(|c| c.final_comment.comment_id.as_str()).collect();
        for c in pool.iter().filter(|c| c.post_id() == target.post_id()) {
            if !chosen.contains(c.final_comment.comment_id.as_str()) && picked.len() == 2 {
                prop_assert!(c.length().abs_diff(target.length()) >= worst.unwrap());
            }
        }
        let eligible = pool.iter().filter(|c| c.post_id() == target.post_id()).count();
        prop_assert_eq!(picked.len(), eligible.min(2));
    }

    #[test]
    fn detection_ignores_case_and_outer_whitespace(
        index in 1u32..6,
        verbatim in any::<bool>(),
        pad_left in "[ \t\n]{0,4}",
        pad_right in "[ \t\n]{0,4}",
        upper in proptest::collection::vec(any::<bool>(), 80),
    ) {
        let rules: Vec<CommunityRule> = (1..=4)
            .map(|i| CommunityRule::new("sub", i, &format!("Rule name {i}"), &format!("keep posts about topic number {i}")))
            .collect();
        let body = if verbatim {
            format!("Removed: keep posts about topic number {}", index.min(4))
        } else {
            format!("This comment violates Rule {index}, thanks")
        };
        let flipped: String = body
            .chars()
            .zip(upper.iter().cycle())
            .map(|(c, &u)| if u { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
            .collect();
        let mk = |b: String| Comment {
            comment_id: "m".into(),
            parent_id: Some("c".into()),
            post_id: "p".into(),
            subreddit: "sub".into(),
            author_pseudonym: "mod".into(),
            body: Some(b),
            created_utc: 1,
            removed: false,
            author_is_moderator: true,
        };
        let base = detect_moderation_event(&mk(body.clone()), &rules);
        prop_assert_eq!(base, detect_moderation_event(&mk(body), &rules));
        prop_assert_eq!(base, detect_moderation_event(&mk(format!("{pad_left}{flipped}{pad_right}")), &rules));
    }
}

#[test]
fn matched_rules_come_from_the_comment_subreddit() {
    for seed in 0..5 {
        let corpus = generate(&SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        });
        let built = build_corpus(&mut corpus.store(), &corpus.rules, Some(&corpus.archive_client()), &BuildConfig::default()).unwrap();
        for e in built.dataset.moderated() {
            let ev = e.conversation.moderation_event.as_ref().unwrap();
            assert_eq!(ev.matched_rule.subreddit, e.conversation.final_comment.subreddit);
            let rule = corpus.rules.resolve(&ev.matched_rule).unwrap();
            assert_eq!(&ev.violation_types, rule.coarse_types());
        }
    }
}

#[test]
fn release_contains_no_text_and_no_usernames() {
    println!("{}", release_privacy());
}

pub fn release_privacy() -> String {
    let corpus = generate(&SyntheticConfig::default());
    let built = build_corpus(&mut corpus.store(), &corpus.rules, Some(&corpus.archive_client()), &BuildConfig::default()).unwrap();
    let release = serialize_release(&built.dataset).unwrap();
    let mut out = Vec::new();
    release.write_records(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(release.records.len(), built.dataset.len());

    let bodies: BTreeSet<&str> = corpus
        .comments
        .iter()
        .filter_map(|c| c.body.as_deref())
        .chain(corpus.archive.iter().map(|(_, b)| b.as_str()))
        .collect();
    let users: BTreeSet<&str> = corpus.comments.iter().map(|c| c.author_pseudonym.as_str()).collect();
    let leaked_bodies = bodies.iter().filter(|b| text.contains(**b)).count();
    let leaked_users = users.iter().filter(|u| text.contains(**u)).count();
    assert_eq!(leaked_bodies, 0);
    assert_eq!(leaked_users, 0);
    format!(
        "{} records searched for {} bodies and {} usernames",
        release.records.len(),
        bodies.len(),
        users.len()
    )
}

#[test]
fn large_dump_parses_to_the_emitted_count() {
    let corpus = generate(&SyntheticConfig {
        seed: 3,
        subreddits: 10,
        posts_per_subreddit: 40,
        comments_per_post: 24,
        malformed_lines: 60,
        ..SyntheticConfig::default()
    });
    let mut dump = Vec::new();
    corpus.write_dump(&mut dump).unwrap();
    let lines = dump.iter().filter(|&&b| b == b'\n').count();
    assert!(lines >= 10_000, "{lines} lines");
    let parsed = parse_dump(dump.as_slice()).unwrap();
    assert_eq!(parsed.comments.len(), corpus.truth.emitted_comments);
    assert_eq!(parsed.malformed, corpus.truth.malformed_lines);
    assert_eq!(parsed.lines, lines);
}
