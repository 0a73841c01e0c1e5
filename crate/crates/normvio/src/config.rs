use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use normvio_core::detector::DetectorVariant;
use normvio_core::explainer::ExplainerVariant;
use normvio_core::nn::ModelConfig;
use normvio_core::taxonomy::CoarseRuleType;

#[derive(Debug, thiserror::Error)]
pub enum PipelineConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid pipeline config: {0}")]
    Invalid(String),
}

/// Settings shared by every subcommand. Loaded from TOML; command-line
/// flags override individual values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub seeds: Seeds,
    pub variants: Variants,
    pub thresholds: Thresholds,
    /// `hashbag-small` or `hashbag-768`.
    pub encoder_checkpoint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dumps: Vec<PathBuf>,
    pub rules: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub annotated_rules: Option<PathBuf>,
    pub synthetic: PathBuf,
    pub corpus: PathBuf,
    pub pairs: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Synthetic generation and pair sampling.
    pub data: u64,
    pub split: u64,
    pub training: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Variants {
    pub detector: Vec<DetectorVariant>,
    pub explainer: Vec<ExplainerVariant>,
    pub types: Vec<CoarseRuleType>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub decision: f64,
    pub rule_type: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            seeds: Seeds::default(),
            variants: Variants::default(),
            thresholds: Thresholds::default(),
            encoder_checkpoint: "hashbag-small".to_string(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        let work = PathBuf::from("work");
        Paths {
            dumps: Vec::new(),
            rules: None,
            archive: None,
            annotated_rules: None,
            synthetic: work.join("synthetic"),
            corpus: work.join("corpus"),
            pairs: work.join("pairs"),
            models: work.join("models"),
            reports: work.join("reports"),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            data: 7,
            split: 0,
            training: vec![1, 2, 3],
        }
    }
}

impl Default for Variants {
    fn default() -> Self {
        Variants {
            detector: DetectorVariant::ALL.to_vec(),
            explainer: vec![ExplainerVariant::Rule],
            types: CoarseRuleType::ALL.to_vec(),
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            decision: 0.5,
            rule_type: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, PipelineConfigError> {
        toml::from_str(text).map_err(|source| PipelineConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads `path` when given, else the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, PipelineConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| PipelineConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<(), PipelineConfigError> {
        let bad = |m: String| Err(PipelineConfigError::Invalid(m));
        for (name, t) in [
            ("thresholds.decision", self.thresholds.decision),
            ("thresholds.rule_type", self.thresholds.rule_type),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("{name} = {t} is outside [0, 1]"));
            }
        }
        if self.seeds.training.is_empty() {
            return bad("seeds.training is empty".into());
        }
        if self.variants.detector.is_empty() || self.variants.explainer.is_empty() || self.variants.types.is_empty() {
            return bad("variant and type selections must not be empty".into());
        }
        self.model_config()?;
        Ok(())
    }

    /// Model widths for the configured encoder checkpoint.
    pub fn model_config(&self) -> Result<ModelConfig, PipelineConfigError> {
        [ModelConfig::small(), ModelConfig::reference()]
            .into_iter()
            .find(|m| m.encoder_checkpoint == self.encoder_checkpoint)
            .ok_or_else(|| {
                PipelineConfigError::Invalid(format!(
                    "unknown encoder checkpoint `{}`; expected hashbag-small or hashbag-768",
                    self.encoder_checkpoint
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let p = Path::new("pipeline.toml");
        assert!(PipelineConfig::from_toml("[seeds]\nsplit = 4\n", p).is_ok());
        assert!(PipelineConfig::from_toml("[seeds]\nsplt = 4\n", p).is_err());
        assert!(PipelineConfig::from_toml("colour = 1\n", p).is_err());
    }

    #[test]
    fn variants_and_types_parse_by_name() {
        let cfg = PipelineConfig::from_toml(
            "[variants]\ndetector = [\"history-community\"]\ntypes = [\"Hate speech\", \"Format\"]\n",
            Path::new("p.toml"),
        )
        .unwrap();
        assert_eq!(cfg.variants.detector, vec![DetectorVariant::HistoryCommunity]);
        assert_eq!(cfg.variants.types, vec![CoarseRuleType::HateSpeech, CoarseRuleType::Format]);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = PipelineConfig::default();
        cfg.thresholds.decision = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.encoder_checkpoint = "bert-base".into();
        assert!(cfg.validate().is_err());
    }
}
