use serde::{Deserialize, Serialize};

use normvio_core::corpus::Conversation;
use normvio_core::taxonomy::CoarseRuleType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    Removed,
    Approved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionAction {
    Remove,
    Approve,
}

impl DecisionAction {
    pub fn status(self) -> ItemStatus {
        match self {
            DecisionAction::Remove => ItemStatus::Removed,
            DecisionAction::Approve => ItemStatus::Approved,
        }
    }
}

/// Explainer output for one community rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RulePrediction {
    pub rule_index: u32,
    pub rule_text: String,
    /// First coarse type of the rule, if it has any.
    pub coarse_type: Option<CoarseRuleType>,
    pub probability: f64,
}

/// Output of a per-type violation detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub coarse_type: CoarseRuleType,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionInfo {
    pub actor: String,
    pub decided_at: i64,
    pub rule_index: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageItem {
    pub item_id: String,
    pub subreddit: String,
    pub conversation: Conversation,
    /// Ranked by probability, highest first.
    pub predictions: Vec<RulePrediction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub type_scores: Vec<TypeScore>,
    pub status: ItemStatus,
    pub created_at: i64,
    pub payload_digest: String,
    pub decision: Option<DecisionInfo>,
}

impl TriageItem {
    /// Highest probability among rule predictions and detector scores.
    pub fn top_probability(&self) -> f64 {
        self.predictions
            .iter()
            .map(|p| p.probability)
            .chain(self.type_scores.iter().map(|t| t.probability))
            .fold(0.0, f64::max)
    }
}

/// A moderator decision turned into a retraining example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub item_id: String,
    pub subreddit: String,
    pub conversation: Conversation,
    /// `true` when the moderator removed the conversation.
    pub label: bool,
    pub rule_index: Option<u32>,
    pub provenance: String,
}

pub const MODERATOR_DECISION: &str = "moderator_decision";

impl LabeledExample {
    /// `None` for items still pending.
    pub fn from_item(item: &TriageItem) -> Option<Self> {
        let decision = item.decision.as_ref()?;
        Some(LabeledExample {
            item_id: item.item_id.clone(),
            subreddit: item.subreddit.clone(),
            conversation: item.conversation.clone(),
            label: item.status == ItemStatus::Removed,
            rule_index: decision.rule_index,
            provenance: MODERATOR_DECISION.to_string(),
        })
    }
}
