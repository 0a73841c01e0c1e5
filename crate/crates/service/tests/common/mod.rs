#![allow(dead_code)]

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use normvio_core::corpus::{CommunityRule, Conversation, RuleBook};
use normvio_core::taxonomy::FineRuleType;
use normvio_service::{rule_prediction, Clock, Scorer, Scores};

/// Reads the probability from a `p0.xx` token in the final comment and
/// gives rule 1 that value, every other rule half of it.
pub struct StubScorer;

impl Scorer for StubScorer {
    fn score(&self, conversation: &Conversation, rules: &[CommunityRule]) -> Scores {
        let p: f64 = conversation
            .final_comment
            .text()
            .split_whitespace()
            .find_map(|w| w.strip_prefix('p').and_then(|v| v.parse().ok()))
            .unwrap_or(0.0);
        let mut predictions: Vec<_> = rules
            .iter()
            .map(|r| rule_prediction(r, if r.rule_index == 1 { p } else { p / 2.0 }))
            .collect();
        predictions.sort_by(|a, b| b.probability.total_cmp(&a.probability));
        Scores {
            predictions,
            type_scores: vec![],
        }
    }
}

pub fn rules() -> RuleBook {
    let mut rules = Vec::new();
    for sub in ["cooking", "running"] {
        rules.push(CommunityRule::new(sub, 1, "Be civil", "No insults or personal attacks.").with_types([FineRuleType::Personality]));
        rules.push(CommunityRule::new(sub, 2, "No spam", "No self-promotion or advertising.").with_types([FineRuleType::Spam]));
        rules.push(CommunityRule::new(sub, 3, "Stay on topic", "Posts must be about the community topic.").with_types([FineRuleType::OffTopic]));
    }
    RuleBook::from_rules(rules).unwrap()
}

/// Ticks one second per call.
pub fn ticking_clock() -> Clock {
    let t = Arc::new(AtomicI64::new(1_700_000_000));
    Arc::new(move || t.fetch_add(1, Ordering::SeqCst))
}

pub fn score_body(sub: &str, final_text: &str) -> Value {
    json!({
        "subreddit": sub,
        "conversation": [
            {"author": "alice", "body": "what are you cooking tonight", "created_utc": 1},
            {"author": "bob", "body": final_text, "created_utc": 2}
        ]
    })
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}
