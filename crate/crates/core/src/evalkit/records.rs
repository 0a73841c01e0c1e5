use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One scored example. Detector runs use the coarse type name as `target`;
/// explainer runs use [`PAIR_TARGET`] with the rule id folded into
/// `example_id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub example_id: String,
    pub target: String,
    pub score: f64,
    pub decision: bool,
    pub label: bool,
    /// Variant or baseline name.
    pub model: String,
    pub seed: u64,
    pub split_seed: u64,
}

pub const PAIR_TARGET: &str = "rule-pairs";

/// Example id of a (conversation, rule) pair.
pub fn pair_example_id(conversation_id: &str, subreddit: &str, rule_index: u32) -> String {
    format!("{conversation_id}@{subreddit}#{rule_index}")
}

impl PredictionRecord {
    /// Builds a thresholded record; `decision` is `score >= threshold`.
    pub fn thresholded(
        example_id: impl Into<String>,
        target: impl Into<String>,
        score: f64,
        threshold: f64,
        label: bool,
    ) -> Self {
        PredictionRecord {
            example_id: example_id.into(),
            target: target.into(),
            score,
            decision: score >= threshold,
            label,
            model: String::new(),
            seed: 0,
            split_seed: 0,
        }
    }

    pub fn tagged(mut self, model: &str, seed: u64, split_seed: u64) -> Self {
        self.model = model.to_string();
        self.seed = seed;
        self.split_seed = split_seed;
        self
    }
}

pub fn write_predictions<W: Write>(records: &[PredictionRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EvalError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(EvalError::Parse {
                line: i + 1,
                message: format!("score {} outside [0, 1]", rec.score),
            });
        }
        out.push(rec);
    }
    Ok(out)
}
