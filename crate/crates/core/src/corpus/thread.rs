use std::collections::HashSet;

use super::store::CommentStore;
use super::{Conversation, CorpusError};

/// Walks parent links from `removed_comment_id` up to its root post and
/// returns the conversation in root-to-leaf order.
pub fn reconstruct_thread(
    removed_comment_id: &str,
    store: &CommentStore,
) -> Result<Conversation, CorpusError> {
    let leaf = store
        .get(removed_comment_id)
        .ok_or_else(|| CorpusError::MissingComment(removed_comment_id.to_string()))?;
    let mut path = vec![leaf.clone()];
    let mut seen = HashSet::from([leaf.comment_id.as_str()]);
    let mut current = leaf;
    while let Some(parent_id) = &current.parent_id {
        let Some(parent) = store.get(parent_id) else {
            path.reverse();
            return Err(CorpusError::PartialThread {
                removed: removed_comment_id.to_string(),
                missing: parent_id.clone(),
                reachable: path,
            });
        };
        if !seen.insert(parent.comment_id.as_str()) {
            return Err(CorpusError::Cycle(removed_comment_id.to_string()));
        }
        path.push(parent.clone());
        current = parent;
    }
    path.reverse();
    let post = path[0].clone();
    let final_comment = path.pop().expect("path holds the leaf");
    let chain = if path.is_empty() {
        Vec::new()
    } else {
        path.drain(1..).collect()
    };
    Ok(Conversation {
        post,
        chain,
        final_comment,
        moderation_event: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::comment;

    fn store() -> CommentStore {
        CommentStore::from_comments([
            comment("p", None, "p", 0),
            comment("c1", Some("p"), "p", 1),
            comment("c2", Some("c1"), "p", 2),
            comment("d", Some("p"), "p", 3),
            comment("orphan", Some("gone"), "p", 4),
            comment("deeper", Some("orphan"), "p", 5),
        ])
        .unwrap()
    }

    #[test]
    fn two_hop_chain() {
        let conv = reconstruct_thread("c2", &store()).unwrap();
        assert_eq!(conv.post.comment_id, "p");
        assert_eq!(conv.chain.len(), 1);
        assert_eq!(conv.chain[0].comment_id, "c1");
        assert_eq!(conv.final_comment.comment_id, "c2");
        assert_eq!(conv.length(), 2);
    }

    #[test]
    fn direct_reply_has_empty_chain() {
        let conv = reconstruct_thread("d", &store()).unwrap();
        assert!(conv.chain.is_empty());
        assert_eq!(conv.length(), 1);
    }

    #[test]
    fn removed_post_is_its_own_conversation() {
        let conv = reconstruct_thread("p", &store()).unwrap();
        assert!(conv.final_is_post());
        assert_eq!(conv.length(), 0);
        assert_eq!(conv.comment_ids(), vec!["p"]);
    }

    #[test]
    fn broken_chain_reports_reachable_prefix() {
        match reconstruct_thread("deeper", &store()) {
            Err(CorpusError::PartialThread { missing, reachable, .. }) => {
                assert_eq!(missing, "gone");
                let ids: Vec<_> = reachable.iter().map(|c| c.comment_id.as_str()).collect();
                assert_eq!(ids, ["orphan", "deeper"]);
            }
            other => panic!("expected partial thread, got {other:?}"),
        }
    }

    #[test]
    fn missing_leaf() {
        assert!(matches!(
            reconstruct_thread("nope", &store()),
            Err(CorpusError::MissingComment(_))
        ));
    }

    #[test]
    fn cycles_are_detected() {
        let s = CommentStore::from_comments([
            comment("a", Some("b"), "p", 0),
            comment("b", Some("a"), "p", 1),
        ])
        .unwrap();
        assert!(matches!(reconstruct_thread("a", &s), Err(CorpusError::Cycle(_))));
    }

    /// Counting convention: a post-level violation counts 0 utterances and a
    /// direct reply 1, so an even mix of the two averages 0.5, which is how a
    /// category where half the violations are the post or a reply to it
    /// averages about 0.5.
    #[test]
    fn length_convention_brute_force() {
        let s = store();
        let post_level = reconstruct_thread("p", &s).unwrap().length();
        let reply_level = reconstruct_thread("d", &s).unwrap().length();
        assert_eq!((post_level, reply_level), (0, 1));
        assert_eq!((post_level + reply_level) as f64 / 2.0, 0.5);
    }
}
