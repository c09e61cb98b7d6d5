use axum::body::{Body, Bytes};
use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use minesentinel_core::control::wire::decode_packet;
use minesentinel_core::control::{AlertId, AlertState, ControlError, HistoryQuery, RecordKind};
use minesentinel_core::types::OperatorId;
use minesentinel_core::{HelmetId, Millis};
use serde::Deserialize;
use serde_json::json;

use crate::{stream, AppState};

#[derive(Debug)]
pub enum ApiError {
    Unauthorized(String),
    BadRequest(String),
    NotFound(String),
    Conflict(String),
}

impl From<ControlError> for ApiError {
    fn from(e: ControlError) -> Self {
        let msg = e.to_string();
        match e {
            ControlError::Unauthorized(_) => ApiError::Unauthorized(msg),
            ControlError::Schema(_) | ControlError::InvertedRange { .. } => {
                ApiError::BadRequest(msg)
            }
            ControlError::UnknownAlert(_) => ApiError::NotFound(msg),
            ControlError::IllegalTransition { .. } | ControlError::DuplicateHelmet(_) => {
                ApiError::Conflict(msg)
            }
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(e: PathRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::Unauthorized(m) => (StatusCode::UNAUTHORIZED, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

fn bearer(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ApiError::Unauthorized("missing bearer token".into()))
}

pub(crate) fn operator(state: &AppState, headers: &HeaderMap) -> Result<OperatorId, ApiError> {
    let token = bearer(headers)?;
    state
        .with_sim(|s| s.control().operator_for_token(&token).cloned())
        .ok_or_else(|| ApiError::Unauthorized("token is not an operator token".into()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/ingest", post(ingest))
        .route("/api/helmets", get(helmets))
        .route("/api/alerts", get(alerts))
        .route("/api/alerts/{id}/ack", post(ack))
        .route("/api/history", get(history))
        .route("/api/stream", get(stream_handler))
        .with_state(state)
}

async fn ingest(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let token = bearer(&headers)?;
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let packet = decode_packet(text).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let at = state.with_sim(|s| s.submit(packet, &token))?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "accepted": true, "arrival_ms": at })),
    ))
}

async fn helmets(State(state): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    operator(&state, &headers)?;
    let list: Vec<_> = state.with_sim(|s| s.control().timelines().cloned().collect());
    Ok(Json(list).into_response())
}

#[derive(Deserialize)]
struct AlertsParams {
    state: Option<String>,
}

async fn alerts(
    State(state): State<AppState>,
    headers: HeaderMap,
    p: Result<Query<AlertsParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    operator(&state, &headers)?;
    let Query(p) = p?;
    let filter = match p.state.as_deref() {
        None | Some("") => None,
        Some(name) => Some(
            AlertState::from_name(name)
                .ok_or_else(|| ApiError::BadRequest(format!("unknown alert state `{name}`")))?,
        ),
    };
    let list: Vec<_> =
        state.with_sim(|s| s.control().alerts_in(filter).into_iter().cloned().collect());
    Ok(Json(list).into_response())
}

async fn ack(
    State(state): State<AppState>,
    headers: HeaderMap,
    id: Result<Path<u64>, PathRejection>,
) -> Result<Response, ApiError> {
    let op = operator(&state, &headers)?;
    let Path(id) = id?;
    let alert = state.with_sim(|s| {
        let t = s.now().unwrap_or(0);
        s.control_mut().acknowledge(AlertId(id), &op, t)
    })?;
    Ok(Json(alert).into_response())
}

#[derive(Deserialize)]
struct HistoryParams {
    helmet: Option<String>,
    kind: Option<String>,
    from_ms: Option<Millis>,
    to_ms: Option<Millis>,
    offset: Option<u64>,
    limit: Option<usize>,
}

async fn history(
    State(state): State<AppState>,
    headers: HeaderMap,
    p: Result<Query<HistoryParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    operator(&state, &headers)?;
    let Query(p) = p?;
    let kind = match p.kind.as_deref() {
        None | Some("") => None,
        Some(k) => Some(
            RecordKind::from_name(k)
                .ok_or_else(|| ApiError::BadRequest(format!("unknown record kind `{k}`")))?,
        ),
    };
    let q = HistoryQuery {
        helmet: p
            .helmet
            .filter(|h| !h.is_empty())
            .map(|h| HelmetId::from(h.as_str())),
        kind,
        from_ms: p.from_ms.unwrap_or(0),
        to_ms: p.to_ms.unwrap_or(Millis::MAX),
        offset: p.offset.unwrap_or(0),
        limit: p.limit,
    };
    let records: Vec<_> = state.with_sim(|s| {
        s.control()
            .history(&q)
            .map(|rs| rs.into_iter().cloned().collect::<Vec<_>>())
    })?;
    Ok(Json(records).into_response())
}

#[derive(Deserialize)]
struct StreamParams {
    from_offset: Option<u64>,
}

async fn stream_handler(
    State(state): State<AppState>,
    headers: HeaderMap,
    p: Result<Query<StreamParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    operator(&state, &headers)?;
    let Query(p) = p?;
    let body = Body::from_stream(stream::records(state, p.from_offset.unwrap_or(0)));
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}
