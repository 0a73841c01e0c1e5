use super::metrics::BinaryCounts;
use super::EvalError;

/// Number of grid steps over `[0, 1]`.
pub const GRID_STEPS: u32 = 100;

pub fn grid() -> impl Iterator<Item = f64> {
    (0..=GRID_STEPS).map(|i| f64::from(i) / f64::from(GRID_STEPS))
}

/// Macro F1 of the decisions `score >= threshold`.
pub fn macro_f1_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64, EvalError> {
    let preds: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    Ok(BinaryCounts::from_pairs(&preds, labels)?.macro_f1())
}

/// Smallest grid threshold reaching the best dev macro F1.
pub fn tune_threshold(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(EvalError::SingleClass);
    }
    let mut best = (0.0, f64::NEG_INFINITY);
    for t in grid() {
        let f = macro_f1_at(scores, labels, t)?;
        if f > best.1 {
            best = (t, f);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separating_threshold_is_smallest_grid_point() {
        let t = tune_threshold(&[0.1, 0.4, 0.9], &[false, false, true]).unwrap();
        assert_eq!(t, 0.41);
    }

    #[test]
    fn constant_scores_pick_zero() {
        let t = tune_threshold(&[0.3; 4], &[true, false, true, false]).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(tune_threshold(&[0.2, 0.8], &[true, true]), Err(EvalError::SingleClass));
    }
}
