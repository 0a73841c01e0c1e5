use super::store::CommentStore;
use super::thread::reconstruct_thread;
use super::Conversation;

/// Picks up to two control conversations closest in length to `target`.
///
/// Ties on length distance go to the earlier final comment, then to the
/// lexicographically smaller final comment id. Candidates from another post
/// or carrying a moderation event are ignored.
pub fn pair_controls(target: &Conversation, candidates: &[Conversation]) -> Vec<Conversation> {
    let target_len = target.length();
    let mut eligible: Vec<&Conversation> = candidates
        .iter()
        .filter(|c| c.post_id() == target.post_id() && !c.moderated())
        .collect();
    eligible.sort_by(|a, b| {
        let key = |c: &Conversation| {
            (
                c.length().abs_diff(target_len),
                c.final_comment.created_utc,
                c.final_comment.comment_id.clone(),
            )
        };
        key(a).cmp(&key(b))
    });
    eligible.into_iter().take(2).cloned().collect()
}

/// Unmoderated conversations under `post_id` that can serve as controls:
/// one per leaf comment whose whole thread, post included, has nothing
/// removed and nothing written by a moderator.
pub fn control_candidates(store: &CommentStore, post_id: &str) -> Vec<Conversation> {
    let Some(post) = store.get(post_id) else {
        return Vec::new();
    };
    if !clean(post) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut stack: Vec<&str> = store.children(post_id).iter().map(String::as_str).collect();
    while let Some(id) = stack.pop() {
        let Some(c) = store.get(id) else { continue };
        if !clean(c) {
            continue;
        }
        let kids = store.children(id);
        if kids.is_empty() {
            if let Ok(conv) = reconstruct_thread(id, store) {
                out.push(conv);
            }
        } else {
            stack.extend(kids.iter().map(String::as_str));
        }
    }
    out.sort_by(|a, b| a.final_comment.comment_id.cmp(&b.final_comment.comment_id));
    out
}

fn clean(c: &super::Comment) -> bool {
    !c.removed && !c.author_is_moderator
}
