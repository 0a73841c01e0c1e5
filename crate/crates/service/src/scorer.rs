use normvio_core::corpus::{CommunityRule, Conversation};
use normvio_core::detector::DetectorModel;
use normvio_core::explainer::ExplainerModel;
use normvio_core::taxonomy::CoarseRuleType;

use crate::item::{RulePrediction, TypeScore};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scores {
    pub predictions: Vec<RulePrediction>,
    pub type_scores: Vec<TypeScore>,
}

/// Scores a conversation against its community's rules.
pub trait Scorer: Send + Sync {
    fn score(&self, conversation: &Conversation, rules: &[CommunityRule]) -> Scores;
}

/// Trained explainer plus any number of per-type detectors.
pub struct ModelScorer {
    pub explainer: Option<ExplainerModel>,
    pub detectors: Vec<(CoarseRuleType, DetectorModel)>,
}

pub fn rule_prediction(rule: &CommunityRule, probability: f64) -> RulePrediction {
    RulePrediction {
        rule_index: rule.rule_index,
        rule_text: rule.text(),
        coarse_type: rule.coarse_types().iter().next().copied(),
        probability,
    }
}

impl Scorer for ModelScorer {
    fn score(&self, conversation: &Conversation, rules: &[CommunityRule]) -> Scores {
        let predictions = match &self.explainer {
            Some(m) => m
                .explain(conversation, rules)
                .into_iter()
                .map(|s| rule_prediction(&s.rule, s.probability))
                .collect(),
            None => Vec::new(),
        };
        let type_scores = self
            .detectors
            .iter()
            .map(|(t, m)| TypeScore {
                coarse_type: *t,
                probability: m.predict(conversation),
            })
            .collect();
        Scores {
            predictions,
            type_scores,
        }
    }
}
