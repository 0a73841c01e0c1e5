use std::collections::HashMap;

use super::{Comment, CorpusError};

/// Comment lookup by id with a child index.
///
/// Built once by a single writer; afterwards only read, so it can be shared
/// across threads by reference.
#[derive(Clone, Debug, Default)]
pub struct CommentStore {
    comments: HashMap<String, Comment>,
    children: HashMap<String, Vec<String>>,
    /// Insertion order, for deterministic iteration.
    order: Vec<String>,
}

impl CommentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_comments(comments: impl IntoIterator<Item = Comment>) -> Result<Self, CorpusError> {
        let mut store = CommentStore::new();
        for c in comments {
            store.insert(c)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, comment: Comment) -> Result<(), CorpusError> {
        if comment.parent_id.as_deref() == Some(comment.comment_id.as_str()) {
            return Err(CorpusError::SelfParent(comment.comment_id));
        }
        if self.comments.contains_key(&comment.comment_id) {
            return Err(CorpusError::DuplicateComment(comment.comment_id));
        }
        if let Some(parent) = &comment.parent_id {
            self.children
                .entry(parent.clone())
                .or_default()
                .push(comment.comment_id.clone());
        }
        self.order.push(comment.comment_id.clone());
        self.comments.insert(comment.comment_id.clone(), comment);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Comment> {
        self.comments.get(id)
    }

    pub fn children(&self, id: &str) -> &[String] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    /// Comments in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Comment> {
        self.order.iter().map(|id| &self.comments[id])
    }

    /// Fills in the text of a comment, e.g. one fetched from an archive.
    pub fn restore_body(&mut self, id: &str, body: String) -> Result<(), CorpusError> {
        let c = self
            .comments
            .get_mut(id)
            .ok_or_else(|| CorpusError::MissingComment(id.to_string()))?;
        c.body = Some(body);
        Ok(())
    }
}
