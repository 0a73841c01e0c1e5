use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Prefix of environment variables overriding config file values.
pub const ENV_PREFIX: &str = "NORMVIO_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{var}: {message}")]
    Env { var: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Service configuration, read from TOML.
///
/// Every scalar field can be overridden by `NORMVIO_<FIELD>` in upper case,
/// e.g. `NORMVIO_LISTEN` or `NORMVIO_FLAG_THRESHOLD`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Rules file in the rule-record format.
    pub rules: PathBuf,
    #[serde(default)]
    pub explainer: Option<PathBuf>,
    /// Detector model directories keyed by coarse type name.
    #[serde(default)]
    pub detectors: BTreeMap<String, PathBuf>,
    pub decision_log: PathBuf,
    /// Where decided items are appended as retraining examples.
    #[serde(default)]
    pub export: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub flag_threshold: f64,
    #[serde(default)]
    pub community_thresholds: BTreeMap<String, f64>,
    /// When set, requests must carry `Authorization: Bearer <token>`.
    #[serde(default)]
    pub auth_token: Option<String>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".to_string()
}

fn default_threshold() -> f64 {
    0.5
}

impl ServiceConfig {
    pub fn new(rules: impl Into<PathBuf>, decision_log: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            listen: default_listen(),
            rules: rules.into(),
            explainer: None,
            detectors: BTreeMap::new(),
            decision_log: decision_log.into(),
            export: None,
            flag_threshold: default_threshold(),
            community_thresholds: BTreeMap::new(),
            auth_token: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, applies `NORMVIO_*` variables from the process
    /// environment and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ServiceConfig = toml::from_str(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let var = |name: &str| lookup(&format!("{ENV_PREFIX}{name}"));
        if let Some(v) = var("LISTEN") {
            self.listen = v;
        }
        if let Some(v) = var("RULES") {
            self.rules = v.into();
        }
        if let Some(v) = var("EXPLAINER") {
            self.explainer = Some(v.into());
        }
        if let Some(v) = var("DECISION_LOG") {
            self.decision_log = v.into();
        }
        if let Some(v) = var("EXPORT") {
            self.export = Some(v.into());
        }
        if let Some(v) = var("AUTH_TOKEN") {
            self.auth_token = Some(v);
        }
        if let Some(v) = var("FLAG_THRESHOLD") {
            self.flag_threshold = v.parse().map_err(|e| ConfigError::Env {
                var: format!("{ENV_PREFIX}FLAG_THRESHOLD"),
                message: format!("{e}"),
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |name: &str, t: f64| {
            if (0.0..=1.0).contains(&t) {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be within [0, 1], got {t}")))
            }
        };
        check("flag_threshold", self.flag_threshold)?;
        for (sub, t) in &self.community_thresholds {
            check(&format!("community_thresholds.{sub}"), *t)?;
        }
        if self.auth_token.as_deref() == Some("") {
            return Err(ConfigError::Invalid("auth_token is empty".into()));
        }
        Ok(())
    }

    pub fn threshold_for(&self, subreddit: &str) -> f64 {
        self.community_thresholds
            .get(subreddit)
            .copied()
            .unwrap_or(self.flag_threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
rules = "rules.jsonl"
decision_log = "decisions.jsonl"

[community_thresholds]
cooking = 0.8
"#;

    #[test]
    fn defaults_and_overrides() {
        let mut cfg = ServiceConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.listen, "127.0.0.1:8080");
        assert_eq!(cfg.threshold_for("cooking"), 0.8);
        assert_eq!(cfg.threshold_for("running"), 0.5);
        cfg.apply_env(|k| match k {
            "NORMVIO_LISTEN" => Some("0.0.0.0:9000".into()),
            "NORMVIO_FLAG_THRESHOLD" => Some("0.3".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.threshold_for("running"), 0.3);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(ServiceConfig::from_toml(&format!("port = 3\n{MINIMAL}")).is_err());
        let bad = MINIMAL.replace("0.8", "1.5");
        assert!(matches!(ServiceConfig::from_toml(&bad), Err(ConfigError::Invalid(_))));
        let mut cfg = ServiceConfig::from_toml(MINIMAL).unwrap();
        let err = cfg.apply_env(|k| (k == "NORMVIO_FLAG_THRESHOLD").then(|| "high".into()));
        assert!(matches!(err, Err(ConfigError::Env { .. })));
    }
}
