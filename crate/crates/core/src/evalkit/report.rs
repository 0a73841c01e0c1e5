use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::BinaryCounts;
use super::records::PredictionRecord;
use super::EvalError;

/// z value of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Mean and 95% half-width `z * sd / sqrt(n)` with the sample standard
/// deviation. The half-width is `None` for fewer than two values.
pub fn mean_ci(values: &[f64]) -> Result<(f64, Option<f64>), EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok((mean, None));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, Some(Z_95 * var.sqrt() / n.sqrt())))
}

/// Macro F1 of one (model, target) pair over its seed runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScore {
    pub model: String,
    pub target: String,
    pub seeds: Vec<u64>,
    pub macro_f1: Vec<f64>,
    pub mean: f64,
    pub ci95: Option<f64>,
    /// Counts pooled over seeds.
    pub counts: BinaryCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    /// Mean over targets of the per-target mean macro F1.
    pub macro_average: f64,
    /// Macro F1 of the counts pooled over every target and seed.
    pub micro_average: f64,
}

/// Detected/missed violations and flagged/clean controls, aggregated over
/// every type of one model and seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub detected_violations: usize,
    pub missed_violations: usize,
    pub flagged_controls: usize,
    pub clean_controls: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.detected_violations + self.missed_violations + self.flagged_controls + self.clean_controls
    }

    pub fn miss_rate(&self) -> f64 {
        let v = self.detected_violations + self.missed_violations;
        if v == 0 {
            0.0
        } else {
            self.missed_violations as f64 / v as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedConfusion {
    pub model: String,
    pub seed: u64,
    pub matrix: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub scores: Vec<TargetScore>,
    pub models: Vec<ModelSummary>,
    pub confusion: Vec<SeedConfusion>,
    /// Examples dropped before scoring, e.g. after scoring-client failures.
    #[serde(default)]
    pub excluded: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Example is a violation when any target labels it positive; detected when
/// any target's decision fires. Every target must cover the same examples
/// from the same split, once each.
pub fn aggregate_confusion(records: &[PredictionRecord]) -> Result<ConfusionMatrix, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let split = records[0].split_seed;
    let mut by_target: BTreeMap<&str, BTreeMap<&str, (bool, bool)>> = BTreeMap::new();
    for r in records {
        if r.split_seed != split {
            return Err(EvalError::SplitMismatch(format!(
                "split seeds {split} and {} mixed",
                r.split_seed
            )));
        }
        let seen = by_target
            .entry(&r.target)
            .or_default()
            .insert(&r.example_id, (r.label, r.decision));
        if seen.is_some() {
            return Err(EvalError::SplitMismatch(format!(
                "example {} appears twice for {}",
                r.example_id, r.target
            )));
        }
    }
    let mut targets = by_target.values();
    let first: BTreeSet<&str> = targets.next().expect("non-empty").keys().copied().collect();
    for t in targets {
        if !t.keys().copied().eq(first.iter().copied()) {
            return Err(EvalError::SplitMismatch("targets cover different examples".into()));
        }
    }
    let mut m = ConfusionMatrix::default();
    for id in first {
        let violation = by_target.values().any(|t| t[id].0);
        let fired = by_target.values().any(|t| t[id].1);
        match (violation, fired) {
            (true, true) => m.detected_violations += 1,
            (true, false) => m.missed_violations += 1,
            (false, true) => m.flagged_controls += 1,
            (false, false) => m.clean_controls += 1,
        }
    }
    Ok(m)
}

/// Groups records by (model, target, seed) and summarizes them.
pub fn build_report(name: &str, records: &[PredictionRecord]) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut runs: BTreeMap<(&str, &str), BTreeMap<u64, Vec<&PredictionRecord>>> = BTreeMap::new();
    for r in records {
        runs.entry((&r.model, &r.target))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push(r);
    }
    let mut scores = Vec::new();
    for ((model, target), seeds) in &runs {
        let mut pooled = BinaryCounts::default();
        let mut f1s = Vec::new();
        for recs in seeds.values() {
            let preds: Vec<bool> = recs.iter().map(|r| r.decision).collect();
            let labels: Vec<bool> = recs.iter().map(|r| r.label).collect();
            let c = BinaryCounts::from_pairs(&preds, &labels)?;
            pooled.merge(&c);
            f1s.push(c.macro_f1());
        }
        let (mean, ci95) = mean_ci(&f1s)?;
        scores.push(TargetScore {
            model: model.to_string(),
            target: target.to_string(),
            seeds: seeds.keys().copied().collect(),
            macro_f1: f1s,
            mean,
            ci95,
            counts: pooled,
        });
    }

    let mut models = Vec::new();
    let names: BTreeSet<&str> = scores.iter().map(|s| s.model.as_str()).collect();
    for m in names {
        let mine: Vec<&TargetScore> = scores.iter().filter(|s| s.model == m).collect();
        let mut pooled = BinaryCounts::default();
        for s in &mine {
            pooled.merge(&s.counts);
        }
        models.push(ModelSummary {
            model: m.to_string(),
            macro_average: mine.iter().map(|s| s.mean).sum::<f64>() / mine.len() as f64,
            micro_average: pooled.macro_f1(),
        });
    }

    let mut by_seed: BTreeMap<(&str, u64), Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_seed.entry((&r.model, r.seed)).or_default().push(r.clone());
    }
    let mut confusion = Vec::new();
    for ((model, seed), recs) in by_seed {
        // pair-level runs have nothing to aggregate across types
        if let Ok(matrix) = aggregate_confusion(&recs) {
            confusion.push(SeedConfusion {
                model: model.to_string(),
                seed,
                matrix,
            });
        }
    }

    Ok(EvalReport {
        name: name.to_string(),
        scores,
        models,
        confusion,
        excluded: 0,
        notes: Vec::new(),
    })
}

impl EvalReport {
    pub fn score(&self, model: &str, target: &str) -> Option<&TargetScore> {
        self.scores.iter().find(|s| s.model == model && s.target == target)
    }

    /// Plain-text table, one row per (model, target).
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.name);
        let _ = writeln!(
            out,
            "{:<22} {:<14} {:>6} {:>8} {:>8} {:>8}",
            "model", "target", "runs", "macroF1", "ci95", "recall"
        );
        for s in &self.scores {
            let ci = s.ci95.map_or("-".to_string(), |c| format!("{c:.4}"));
            let _ = writeln!(
                out,
                "{:<22} {:<14} {:>6} {:>8.4} {:>8} {:>8.4}",
                s.model,
                s.target,
                s.macro_f1.len(),
                s.mean,
                ci,
                s.counts.recall()
            );
        }
        for m in &self.models {
            let _ = writeln!(
                out,
                "{:<22} {:<14} {:>6} {:>8.4} micro {:.4}",
                m.model, "AVERAGE", "", m.macro_average, m.micro_average
            );
        }
        for c in &self.confusion {
            let m = c.matrix;
            let _ = writeln!(
                out,
                "{} seed {}: violations detected {} missed {} | controls flagged {} clean {}",
                c.model, c.seed, m.detected_violations, m.missed_violations, m.flagged_controls, m.clean_controls
            );
        }
        if self.excluded > 0 {
            let _ = writeln!(out, "excluded examples: {}", self.excluded);
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}
