pub mod baselines;
pub mod confusion;
pub mod metrics;
pub mod records;
pub mod report;
pub mod threshold;

pub use baselines::{
    baseline_incivil_hate, baseline_majority, baseline_toxicity, score_with_retries, ToxicityClient,
    ToxicityError,
};
pub use confusion::{type_confusion, TypeConfusion};
pub use metrics::{macro_f1, BinaryCounts};
pub use records::{pair_example_id, read_predictions, write_predictions, PredictionRecord, PAIR_TARGET};
pub use report::{
    aggregate_confusion, build_report, mean_ci, ConfusionMatrix, EvalReport, ModelSummary, SeedConfusion,
    TargetScore,
};
pub use threshold::{macro_f1_at, tune_threshold};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("no examples to evaluate")]
    Empty,
    #[error("development labels contain a single class")]
    SingleClass,
    #[error("predictions come from different splits: {0}")]
    SplitMismatch(String),
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Training(String),
}
