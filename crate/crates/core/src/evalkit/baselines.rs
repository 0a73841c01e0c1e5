use std::collections::BTreeSet;

use tracing::warn;

use super::records::PredictionRecord;
use super::report::{build_report, EvalReport};
use super::threshold::tune_threshold;
use super::EvalError;
use crate::corpus::{Conversation, DataSplit, Dataset, DatasetEntry};
use crate::detector::{predict_split, train_detector_on, DetectorConfig, DetectorVariant};
use crate::taxonomy::CoarseRuleType;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("toxicity scoring failed: {0}")]
pub struct ToxicityError(pub String);

/// External toxicity scorer for a single text.
pub trait ToxicityClient: Send + Sync {
    fn score(&self, text: &str) -> Result<f64, ToxicityError>;
}

/// `retries + 1` attempts; `None` once all of them fail.
pub fn score_with_retries(client: &dyn ToxicityClient, text: &str, retries: u32) -> Option<f64> {
    for attempt in 0..=retries {
        match client.score(text) {
            Ok(s) => return Some(s.clamp(0.0, 1.0)),
            Err(e) => warn!(attempt, error = %e, "toxicity client failed"),
        }
    }
    None
}

fn labels_of(entry: &DatasetEntry) -> &BTreeSet<CoarseRuleType> {
    &entry.violation_types
}

fn require_test(split: &DataSplit) -> Result<(), EvalError> {
    if split.test.is_empty() {
        Err(EvalError::Empty)
    } else {
        Ok(())
    }
}

/// Predicts, per type, the class that is more frequent in the train part.
pub fn baseline_majority(dataset: &Dataset, split: &DataSplit) -> Result<EvalReport, EvalError> {
    require_test(split)?;
    let mut records = Vec::new();
    for t in CoarseRuleType::ALL {
        let positives = split
            .train
            .iter()
            .filter(|&&i| labels_of(&dataset.entries[i]).contains(&t))
            .count();
        // ties go to the negative class
        let majority = positives * 2 > split.train.len();
        let score = if majority { 1.0 } else { 0.0 };
        for &i in &split.test {
            let e = &dataset.entries[i];
            records.push(
                PredictionRecord::thresholded(e.id(), t.name(), score, 0.5, labels_of(e).contains(&t))
                    .tagged("majority", 0, split.seed),
            );
        }
    }
    build_report("majority", &records)
}

/// Thresholds the toxicity of the final comment, one threshold per type
/// tuned on the dev part. Items the client cannot score are excluded.
pub fn baseline_toxicity(
    dataset: &Dataset,
    split: &DataSplit,
    client: &dyn ToxicityClient,
    retries: u32,
) -> Result<EvalReport, EvalError> {
    require_test(split)?;
    let mut excluded = 0;
    let mut scored = |part: &[usize]| -> Vec<(usize, f64)> {
        part.iter()
            .filter_map(|&i| {
                let text = dataset.entries[i].conversation.final_comment.text();
                let s = score_with_retries(client, text, retries);
                if s.is_none() {
                    excluded += 1;
                }
                s.map(|s| (i, s))
            })
            .collect()
    };
    let dev = scored(&split.dev);
    let test = scored(&split.test);
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut notes = Vec::new();
    let mut records = Vec::new();
    for t in CoarseRuleType::ALL {
        let scores: Vec<f64> = dev.iter().map(|(_, s)| *s).collect();
        let labels: Vec<bool> = dev
            .iter()
            .map(|(i, _)| labels_of(&dataset.entries[*i]).contains(&t))
            .collect();
        let threshold = match tune_threshold(&scores, &labels) {
            Ok(th) => th,
            Err(e) => {
                notes.push(format!("{t}: {e}; using 0.5"));
                0.5
            }
        };
        for (i, s) in &test {
            let e = &dataset.entries[*i];
            records.push(
                PredictionRecord::thresholded(e.id(), t.name(), *s, threshold, labels_of(e).contains(&t))
                    .tagged("toxicity", 0, split.seed),
            );
        }
    }
    let mut report = build_report("toxicity", &records)?;
    report.excluded = excluded;
    report.notes = notes;
    Ok(report)
}

/// Incivility and hate-speech violations with their paired controls.
fn incivil_hate_subset<'a>(dataset: &'a Dataset, part: &[usize]) -> Vec<(&'a Conversation, bool)> {
    let wanted = [CoarseRuleType::Incivility, CoarseRuleType::HateSpeech];
    let targets: BTreeSet<&str> = part
        .iter()
        .map(|&i| &dataset.entries[i])
        .filter(|e| e.moderated() && wanted.iter().any(|t| e.violation_types.contains(t)))
        .map(|e| e.id())
        .collect();
    part.iter()
        .map(|&i| &dataset.entries[i])
        .filter(|e| {
            targets.contains(e.id())
                || e.paired_with
                    .as_deref()
                    .is_some_and(|p| targets.contains(p))
        })
        .map(|e| (&e.conversation, e.moderated()))
        .collect()
}

/// One detector trained only on incivility and hate-speech violations,
/// evaluated against every coarse type's labels.
pub fn baseline_incivil_hate(
    dataset: &Dataset,
    split: &DataSplit,
    variant: DetectorVariant,
    seed: u64,
    config: &DetectorConfig,
) -> Result<EvalReport, EvalError> {
    require_test(split)?;
    let train = incivil_hate_subset(dataset, &split.train);
    if train.is_empty() {
        return Err(EvalError::Training(
            "training split has no incivility or hate-speech violations".into(),
        ));
    }
    let dev = incivil_hate_subset(dataset, &split.dev);
    let (model, _) = train_detector_on("incivil-hate", variant, &train, &dev, seed, config)
        .map_err(|e| EvalError::Training(e.to_string()))?;
    let mut records = Vec::new();
    for t in CoarseRuleType::ALL {
        records.extend(
            predict_split(&model, dataset, &split.test, t, split.seed)
                .into_iter()
                .map(|r| PredictionRecord {
                    model: "incivil-hate".into(),
                    ..r
                }),
        );
    }
    build_report("incivil-hate", &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        calls: AtomicUsize,
        fail_first: usize,
    }

    impl ToxicityClient for Flaky {
        fn score(&self, _: &str) -> Result<f64, ToxicityError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(ToxicityError("timeout".into()))
            } else {
                Ok(0.3)
            }
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let c = Flaky {
            calls: AtomicUsize::new(0),
            fail_first: 2,
        };
        assert_eq!(score_with_retries(&c, "x", 2), Some(0.3));
        let c = Flaky {
            calls: AtomicUsize::new(0),
            fail_first: 3,
        };
        assert_eq!(score_with_retries(&c, "x", 2), None);
        assert_eq!(c.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn empty_test_split_is_an_error() {
        let ds = Dataset {
            entries: vec![],
            moderators: BTreeSet::new(),
        };
        let split = DataSplit {
            seed: 0,
            train: vec![],
            dev: vec![],
            test: vec![],
        };
        assert_eq!(baseline_majority(&ds, &split).unwrap_err(), EvalError::Empty);
    }
}
