//! Per-type binary violation detectors in four input-context variants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::corpus::{Conversation, DataSplit, Dataset, DatasetEntry};
use crate::evalkit::PredictionRecord;
use crate::nn::train::counts_at;
use crate::nn::{
    fit, load_model, save_model, FitReport, LabeledInput, ModelConfig, ModelError, ModelManifest,
    PersistError, SequenceClassifier, TrainConfig, TrainError,
};
use crate::taxonomy::CoarseRuleType;

pub const MODEL_KIND: &str = "detector";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorVariant {
    Comment,
    History,
    Community,
    HistoryCommunity,
}

impl DetectorVariant {
    pub const ALL: [DetectorVariant; 4] = [
        DetectorVariant::Comment,
        DetectorVariant::History,
        DetectorVariant::Community,
        DetectorVariant::HistoryCommunity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorVariant::Comment => "comment",
            DetectorVariant::History => "history",
            DetectorVariant::Community => "community",
            DetectorVariant::HistoryCommunity => "history-community",
        }
    }

    pub fn uses_history(self) -> bool {
        matches!(self, DetectorVariant::History | DetectorVariant::HistoryCommunity)
    }

    pub fn uses_community(self) -> bool {
        matches!(self, DetectorVariant::Community | DetectorVariant::HistoryCommunity)
    }
}

impl fmt::Display for DetectorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown variant `{0}`; expected comment, history, community or history-community")]
pub struct UnknownVariant(pub String);

impl FromStr for DetectorVariant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().trim_start_matches('+').to_ascii_lowercase().replace(['_', '+', ' '], "-");
        DetectorVariant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

/// Where the community token goes when history is also used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommunityPrefix {
    #[default]
    FinalOnly,
    EveryUtterance,
}

impl CommunityPrefix {
    pub fn name(self) -> &'static str {
        match self {
            CommunityPrefix::FinalOnly => "final-only",
            CommunityPrefix::EveryUtterance => "every-utterance",
        }
    }
}

pub fn community_token(subreddit: &str) -> String {
    format!("r/{subreddit}")
}

/// Utterance texts fed to the model, oldest first, final comment last.
pub fn build_input(conversation: &Conversation, variant: DetectorVariant, prefix: CommunityPrefix) -> Vec<String> {
    let texts: Vec<String> = if variant.uses_history() {
        conversation
            .utterances()
            .into_iter()
            .map(|c| c.text().to_string())
            .collect()
    } else {
        vec![conversation.final_comment.text().to_string()]
    };
    if !variant.uses_community() {
        return texts;
    }
    let token = community_token(conversation.subreddit());
    let last = texts.len() - 1;
    texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            if i == last || prefix == CommunityPrefix::EveryUtterance {
                format!("{token} {t}")
            } else {
                t
            }
        })
        .collect()
}

/// A conversation with its per-type labels; controls have none.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionExample<'a> {
    pub id: String,
    pub conversation: &'a Conversation,
    pub labels: BTreeSet<CoarseRuleType>,
}

impl<'a> DetectionExample<'a> {
    pub fn from_entry(entry: &'a DatasetEntry) -> Self {
        DetectionExample {
            id: entry.id().to_string(),
            conversation: &entry.conversation,
            labels: if entry.moderated() {
                entry.violation_types.clone()
            } else {
                BTreeSet::new()
            },
        }
    }

    pub fn label(&self, t: CoarseRuleType) -> bool {
        self.labels.contains(&t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub community_prefix: CommunityPrefix,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            model: ModelConfig::small(),
            train: TrainConfig::default(),
            community_prefix: CommunityPrefix::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DetectorError {
    #[error("{target}: training split has no positive examples")]
    NoPositives { target: String },
    #[error("{target}: training split has no negative examples")]
    NoNegatives { target: String },
    #[error("{target}: {source}")]
    Train { target: String, source: TrainError },
    #[error("input does not fit the model: {0}")]
    Usage(#[from] ModelError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("{path}: not a detector model (kind `{kind}`)")]
    WrongKind { path: String, kind: String },
    #[error("{path}: manifest field `{field}` is invalid")]
    BadManifest { path: String, field: &'static str },
}

/// A trained detector for one target (a coarse type, or a custom label set).
#[derive(Clone, Debug)]
pub struct DetectorModel {
    pub target: String,
    pub variant: DetectorVariant,
    pub prefix: CommunityPrefix,
    pub model: SequenceClassifier,
    pub manifest: ModelManifest,
}

impl DetectorModel {
    pub fn threshold(&self) -> f64 {
        self.manifest.decision_threshold
    }

    pub fn predict(&self, conversation: &Conversation) -> f64 {
        let texts = build_input(conversation, self.variant, self.prefix);
        self.predict_texts(&texts)
            .expect("variant-built inputs always fit the model")
    }

    /// Scores pre-built utterance texts. More than one utterance on a model
    /// without a context encoder is a usage error.
    pub fn predict_texts(&self, texts: &[String]) -> Result<f64, DetectorError> {
        let input = self.model.featurizer().encode(texts);
        Ok(self.model.predict(&input)?)
    }

    pub fn save(&self, dir: &Path) -> Result<(), DetectorError> {
        save_model(dir, &self.manifest, &self.model)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DetectorError> {
        let (manifest, model) = load_model(dir)?;
        let path = dir.display().to_string();
        if manifest.kind != MODEL_KIND {
            return Err(DetectorError::WrongKind {
                path,
                kind: manifest.kind,
            });
        }
        let variant = manifest
            .variant
            .as_deref()
            .and_then(|v| v.parse().ok())
            .ok_or(DetectorError::BadManifest {
                path: path.clone(),
                field: "variant",
            })?;
        let prefix = match manifest.options.get("community_prefix").map(String::as_str) {
            None | Some("final-only") => CommunityPrefix::FinalOnly,
            Some("every-utterance") => CommunityPrefix::EveryUtterance,
            Some(_) => {
                return Err(DetectorError::BadManifest {
                    path,
                    field: "options.community_prefix",
                })
            }
        };
        Ok(DetectorModel {
            target: manifest.target.clone(),
            variant,
            prefix,
            model,
            manifest,
        })
    }
}

/// Trains a detector on explicit (conversation, label) lists. The dev list
/// drives early stopping and may be empty.
pub fn train_detector_on(
    target: &str,
    variant: DetectorVariant,
    train: &[(&Conversation, bool)],
    dev: &[(&Conversation, bool)],
    seed: u64,
    config: &DetectorConfig,
) -> Result<(DetectorModel, FitReport), DetectorError> {
    if !train.iter().any(|(_, l)| *l) {
        return Err(DetectorError::NoPositives { target: target.into() });
    }
    if !train.iter().any(|(_, l)| !*l) {
        return Err(DetectorError::NoNegatives { target: target.into() });
    }
    let mut model = SequenceClassifier::new(&config.model, variant.uses_history(), seed);
    let encode = |rows: &[(&Conversation, bool)]| -> Vec<LabeledInput> {
        rows.iter()
            .map(|(c, l)| {
                let texts = build_input(c, variant, config.community_prefix);
                (config.model.featurizer.encode(&texts), *l)
            })
            .collect()
    };
    let train_set = encode(train);
    let dev_set = encode(dev);
    let report = fit(&mut model, &train_set, &dev_set, &config.train, seed).map_err(|source| {
        DetectorError::Train {
            target: target.into(),
            source,
        }
    })?;
    let threshold = config.train.decision_threshold;
    let train_f1 = counts_at(&model, &train_set, threshold)?.macro_f1();
    let mut metrics = BTreeMap::from([
        ("train_macro_f1".to_string(), train_f1),
        ("epochs_run".to_string(), report.epochs_run as f64),
        ("best_epoch".to_string(), report.best_epoch as f64),
        ("train_examples".to_string(), train.len() as f64),
        ("dev_examples".to_string(), dev.len() as f64),
    ]);
    if let Some(f) = report.best_dev_macro_f1 {
        metrics.insert("best_dev_macro_f1".to_string(), f);
    }
    let manifest = ModelManifest {
        kind: MODEL_KIND.to_string(),
        target: target.to_string(),
        variant: Some(variant.name().to_string()),
        seed,
        decision_threshold: threshold,
        encoder_checkpoint: config.model.encoder_checkpoint.clone(),
        with_context: variant.uses_history(),
        model: config.model.clone(),
        train: config.train.clone(),
        metrics,
        options: BTreeMap::from([(
            "community_prefix".to_string(),
            config.community_prefix.name().to_string(),
        )]),
    };
    info!(target, variant = variant.name(), seed, train_f1, epochs = report.epochs_run, "detector trained");
    Ok((
        DetectorModel {
            target: target.to_string(),
            variant,
            prefix: config.community_prefix,
            model,
            manifest,
        },
        report,
    ))
}

fn labeled<'a>(dataset: &'a Dataset, indices: &[usize], t: CoarseRuleType) -> Vec<(&'a Conversation, bool)> {
    indices
        .iter()
        .map(|&i| {
            let ex = DetectionExample::from_entry(&dataset.entries[i]);
            (ex.conversation, ex.label(t))
        })
        .collect()
}

/// Trains the `coarse_type` detector on the split's train part with early
/// stopping on its dev part.
pub fn train_detector(
    coarse_type: CoarseRuleType,
    variant: DetectorVariant,
    dataset: &Dataset,
    split: &DataSplit,
    seed: u64,
    config: &DetectorConfig,
) -> Result<(DetectorModel, FitReport), DetectorError> {
    let train = labeled(dataset, &split.train, coarse_type);
    let dev = labeled(dataset, &split.dev, coarse_type);
    let (mut model, report) = train_detector_on(coarse_type.name(), variant, &train, &dev, seed, config)?;
    model
        .manifest
        .metrics
        .insert("split_seed".to_string(), split.seed as f64);
    Ok((model, report))
}

/// Scores `indices` of `dataset` against the labels of `target_type`.
pub fn predict_split(
    model: &DetectorModel,
    dataset: &Dataset,
    indices: &[usize],
    target_type: CoarseRuleType,
    split_seed: u64,
) -> Vec<PredictionRecord> {
    indices
        .iter()
        .map(|&i| {
            let ex = DetectionExample::from_entry(&dataset.entries[i]);
            let score = model.predict(ex.conversation);
            PredictionRecord::thresholded(ex.id.clone(), target_type.name(), score, model.threshold(), ex.label(target_type))
                .tagged(model.variant.name(), model.manifest.seed, split_seed)
        })
        .collect()
}
