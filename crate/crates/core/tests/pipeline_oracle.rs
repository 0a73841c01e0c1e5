use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;

use normvio_core::corpus::{build_corpus, parse_dump, BuildConfig, Comment, CommentStore, Dataset};
use normvio_core::synth::{generate, SyntheticConfig, SyntheticCorpus};
use normvio_core::taxonomy::CoarseRuleType;

fn find<'a>(comments: &'a [Comment], id: &str) -> Option<&'a Comment> {
    comments.iter().find(|c| c.comment_id == id)
}

/// Ids from the post down to `leaf`, by repeated linear lookup.
fn path_to(comments: &[Comment], leaf: &str) -> Vec<String> {
    let mut path = vec![leaf.to_string()];
    let mut cur = find(comments, leaf).unwrap();
    while let Some(p) = &cur.parent_id {
        path.push(p.clone());
        cur = find(comments, p).unwrap();
    }
    path.reverse();
    path
}

/// Brute-force control selection: for each target in order of its final
/// comment's time, scan every comment of the post for clean leaves not yet
/// used, rank by (length distance, time, id) and keep two.
fn oracle_controls(comments: &[Comment], targets: &[(String, String, usize, i64)]) -> BTreeMap<String, Vec<String>> {
    let mut ordered = targets.to_vec();
    ordered.sort_by(|a, b| (a.3, &a.0).cmp(&(b.3, &b.0)));
    let mut used: HashSet<String> = HashSet::new();
    let mut out = BTreeMap::new();
    for (target, post, len, _) in ordered {
        let mut cands: Vec<(usize, i64, String)> = comments
            .iter()
            .filter(|c| c.post_id == post && c.parent_id.is_some())
            .filter(|c| !comments.iter().any(|k| k.parent_id.as_deref() == Some(&c.comment_id)))
            .filter(|c| !used.contains(&c.comment_id))
            .filter(|c| {
                path_to(comments, &c.comment_id).iter().all(|id| {
                    let x = find(comments, id).unwrap();
                    !x.removed && !x.author_is_moderator
                })
            })
            .map(|c| {
                let l = path_to(comments, &c.comment_id).len() - 1;
                (l.abs_diff(len), c.created_utc, c.comment_id.clone())
            })
            .collect();
        cands.sort();
        let picked: Vec<String> = cands.into_iter().take(2).map(|c| c.2).collect();
        used.extend(picked.iter().cloned());
        out.insert(target, picked);
    }
    out
}

fn build(corpus: &SyntheticCorpus, store: &mut CommentStore) -> Dataset {
    let archive = corpus.archive_client();
    build_corpus(store, &corpus.rules, Some(&archive), &BuildConfig::default())
        .unwrap()
        .dataset
}

#[test]
fn corpus_build_matches_brute_force_oracle() {
    println!("{}", pipeline_oracle());
}

/// Panics on the first disagreement; returns a summary line.
pub fn pipeline_oracle() -> String {
    let started = Instant::now();
    let corpus = generate(&SyntheticConfig {
        seed: 21,
        ..SyntheticConfig::default()
    });
    let ds = build(&corpus, &mut corpus.store());
    assert!(corpus.subreddits.len() >= 5);
    assert!(ds.len() >= 200, "{} conversations", ds.len());
    let covered: BTreeSet<CoarseRuleType> = ds.moderated().flat_map(|e| e.violation_types.iter().copied()).collect();
    assert_eq!(covered.len(), 9);

    // moderation events and threads against what the generator planted
    let truth: BTreeMap<&str, _> = corpus
        .truth
        .events
        .iter()
        .map(|e| (e.removed_comment_id.as_str(), e))
        .collect();
    let targets: Vec<_> = ds.moderated().collect();
    assert_eq!(targets.len(), truth.len());
    for entry in &targets {
        let ev = entry.conversation.moderation_event.as_ref().unwrap();
        let t = truth[ev.removed_comment_id.as_str()];
        assert_eq!(ev.moderation_comment_id, t.moderation_comment_id);
        assert_eq!(ev.matched_rule.subreddit, t.subreddit);
        assert_eq!(ev.matched_rule.rule_index, t.rule_index);
        assert_eq!(ev.match_method, t.method);
        assert_eq!(ev.additional_rules, t.additional_rules);
        assert_eq!(entry.violation_types, t.coarse_types);
        assert_eq!(entry.forecast_only, !t.archived);
        assert_eq!(entry.conversation.comment_ids(), t.path);
        assert_eq!(entry.conversation.comment_ids(), path_to(&corpus.comments, &ev.removed_comment_id));
    }

    // control pairing against the brute-force oracle
    let target_keys: Vec<(String, String, usize, i64)> = targets
        .iter()
        .map(|e| {
            let c = &e.conversation;
            (e.id().to_string(), c.post_id().to_string(), c.length(), c.final_comment.created_utc)
        })
        .collect();
    let expected = oracle_controls(&corpus.comments, &target_keys);
    let mut got: BTreeMap<String, Vec<String>> = targets.iter().map(|e| (e.id().to_string(), vec![])).collect();
    for c in ds.controls() {
        let group = c.paired_with.clone().unwrap();
        got.get_mut(&group).unwrap().push(c.id().to_string());
        assert_eq!(c.conversation.comment_ids(), path_to(&corpus.comments, c.id()));
    }
    assert_eq!(got, expected);

    // the same corpus read back from its dump builds identically
    let mut dump = Vec::new();
    corpus.write_dump(&mut dump).unwrap();
    let parsed = parse_dump(dump.as_slice()).unwrap();
    let mut store = CommentStore::from_comments(parsed.comments).unwrap();
    let again = build(&corpus, &mut store);
    assert_eq!(again.entries, ds.entries);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    format!("{} conversations, {} events checked in {elapsed:.1?}", ds.len(), targets.len())
}
