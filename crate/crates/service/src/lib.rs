//! Moderation-assist HTTP service.
//!
//! Incoming conversations are scored against their community's rules by a
//! trained explainer and optional per-type detectors. Anything reaching the
//! flagging threshold becomes a pending triage item; moderators remove or
//! approve items, and every change is appended to a newline-delimited
//! decision log that rebuilds the queue on restart.

mod api;
mod config;
mod error;
mod item;
mod log;
mod scorer;
mod triage;

use std::fs::File;
use std::io::BufReader;
use std::str::FromStr;
use std::sync::Arc;

use tracing::info;

use normvio_core::corpus::read_rules;
use normvio_core::detector::DetectorModel;
use normvio_core::explainer::ExplainerModel;
use normvio_core::taxonomy::CoarseRuleType;

pub use api::router;
pub use config::{ConfigError, ServiceConfig, ENV_PREFIX};
pub use error::ServiceError;
pub use item::{
    DecisionAction, DecisionInfo, ItemStatus, LabeledExample, RulePrediction, TriageItem, TypeScore,
    MODERATOR_DECISION,
};
pub use log::{read_log, DecisionLog, LogError, LogRecord, QueueState};
pub use scorer::{rule_prediction, ModelScorer, Scorer, Scores};
pub use triage::{
    payload_digest, system_clock, to_conversation, Clock, DecisionRequest, QueuePage, RuleView, RulesResponse, ScoreRequest,
    ScoreResponse, Triage, TriageBuilder, UtteranceIn, DEFAULT_PAGE, MAX_PAGE,
};

/// Loads rules, models and the decision log named in `config`.
pub fn triage_from_config(config: &ServiceConfig) -> Result<Triage, ServiceError> {
    let rules = read_rules(BufReader::new(File::open(&config.rules)?))
        .map_err(|e| ServiceError::Internal(format!("rules {}: {e}", config.rules.display())))?;
    let explainer = config
        .explainer
        .as_deref()
        .map(ExplainerModel::load)
        .transpose()
        .map_err(|e| ServiceError::Internal(format!("explainer: {e}")))?;
    let mut detectors = Vec::new();
    for (name, dir) in &config.detectors {
        let t = CoarseRuleType::from_str(name).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let m = DetectorModel::load(dir).map_err(|e| ServiceError::Internal(format!("detector {name}: {e}")))?;
        detectors.push((t, m));
    }
    let mut builder = Triage::builder(rules)
        .threshold(config.flag_threshold)
        .community_thresholds(config.community_thresholds.clone())
        .log_file(&config.decision_log)?;
    if explainer.is_some() || !detectors.is_empty() {
        builder = builder.scorer(Arc::new(ModelScorer { explainer, detectors }));
    }
    if let Some(p) = &config.export {
        builder = builder.export_file(p)?;
    }
    builder.build()
}

/// Serves the `/v1` API until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let triage = Arc::new(triage_from_config(&config)?);
    let app = router(triage, config.auth_token.clone());
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
