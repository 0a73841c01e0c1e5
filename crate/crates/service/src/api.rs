use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::header::AUTHORIZATION;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use crate::error::ServiceError;
use crate::item::TriageItem;
use crate::triage::{DecisionRequest, QueuePage, RulesResponse, ScoreRequest, ScoreResponse, Triage};

#[derive(Clone)]
struct AppState {
    triage: Arc<Triage>,
    token: Option<Arc<str>>,
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    cursor: Option<String>,
    limit: Option<usize>,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn score(
    State(s): State<AppState>,
    payload: Result<Json<ScoreRequest>, JsonRejection>,
) -> Result<Json<ScoreResponse>, ServiceError> {
    let req = body(payload)?;
    let triage = s.triage.clone();
    tokio::task::spawn_blocking(move || triage.score(&req))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map(Json)
}

async fn queue(
    State(s): State<AppState>,
    params: Result<Query<QueueParams>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<QueuePage>, ServiceError> {
    let Query(p) = params.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    s.triage.queue(p.cursor.as_deref(), p.limit).map(Json)
}

async fn decision(
    State(s): State<AppState>,
    payload: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<TriageItem>, ServiceError> {
    let req = body(payload)?;
    s.triage.decide(&req).map(Json)
}

async fn rules(State(s): State<AppState>, Path(sub): Path<String>) -> Result<Json<RulesResponse>, ServiceError> {
    s.triage.rules(&sub).map(Json)
}

async fn require_token(State(s): State<AppState>, req: Request, next: Next) -> Result<Response, ServiceError> {
    if let Some(token) = &s.token {
        let given = req
            .headers()
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(&**token) {
            return Err(ServiceError::Unauthorized);
        }
    }
    Ok(next.run(req).await)
}

/// The `/v1` routes. With a token, every route requires it.
pub fn router(triage: Arc<Triage>, token: Option<String>) -> Router {
    let state = AppState {
        triage,
        token: token.map(Into::into),
    };
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/queue", get(queue))
        .route("/v1/decision", post(decision))
        .route("/v1/rules/{subreddit}", get(rules))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}
