use serde::{Deserialize, Serialize};

use super::EvalError;

/// Counts of a binary task, positive class = violation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl BinaryCounts {
    pub fn from_pairs(predictions: &[bool], labels: &[bool]) -> Result<Self, EvalError> {
        if predictions.len() != labels.len() {
            return Err(EvalError::LengthMismatch {
                predictions: predictions.len(),
                labels: labels.len(),
            });
        }
        let mut c = BinaryCounts::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.true_positive += 1,
                (true, false) => c.false_positive += 1,
                (false, true) => c.false_negative += 1,
                (false, false) => c.true_negative += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }

    pub fn positive_f1(&self) -> f64 {
        f1(self.true_positive, self.false_positive, self.false_negative)
    }

    /// F1 of the negative class, treating "no violation" as the target.
    pub fn negative_f1(&self) -> f64 {
        f1(self.true_negative, self.false_negative, self.false_positive)
    }

    pub fn macro_f1(&self) -> f64 {
        (self.positive_f1() + self.negative_f1()) / 2.0
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    pub fn merge(&mut self, other: &BinaryCounts) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.false_negative += other.false_negative;
        self.true_negative += other.true_negative;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2tp / (2tp + fp + fn)`; zero when the denominator is zero.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

/// Unweighted mean of the positive- and negative-class F1.
pub fn macro_f1(predictions: &[bool], labels: &[bool]) -> Result<f64, EvalError> {
    if predictions.is_empty() && labels.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(BinaryCounts::from_pairs(predictions, labels)?.macro_f1())
}
