use serde::{Deserialize, Serialize};

use super::metrics::BinaryCounts;
use super::records::PredictionRecord;
use super::EvalError;

/// Per-type 2x2 matrix of one model, pooled over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeConfusion {
    pub model: String,
    pub target: String,
    pub counts: BinaryCounts,
}

impl TypeConfusion {
    pub fn false_positive_rate(&self) -> f64 {
        let neg = self.counts.false_positive + self.counts.true_negative;
        if neg == 0 {
            0.0
        } else {
            self.counts.false_positive as f64 / neg as f64
        }
    }
}

pub fn type_confusion(records: &[PredictionRecord], model: &str, target: &str) -> Result<TypeConfusion, EvalError> {
    let (preds, labels): (Vec<bool>, Vec<bool>) = records
        .iter()
        .filter(|r| r.model == model && r.target == target)
        .map(|r| (r.decision, r.label))
        .unzip();
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(TypeConfusion {
        model: model.to_string(),
        target: target.to_string(),
        counts: BinaryCounts::from_pairs(&preds, &labels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_by_model_and_target() {
        let mk = |model: &str, target: &str, d: bool, l: bool| PredictionRecord {
            example_id: "x".into(),
            target: target.into(),
            score: 0.5,
            decision: d,
            label: l,
            model: model.into(),
            seed: 0,
            split_seed: 0,
        };
        let recs = vec![
            mk("comment", "Format", true, false),
            mk("comment", "Format", false, false),
            mk("history", "Format", true, true),
            mk("comment", "Spam", true, true),
        ];
        let c = type_confusion(&recs, "comment", "Format").unwrap();
        assert_eq!(c.counts.false_positive, 1);
        assert_eq!(c.counts.true_negative, 1);
        assert_eq!(c.false_positive_rate(), 0.5);
        assert!(type_confusion(&recs, "history", "Spam").is_err());
    }
}
