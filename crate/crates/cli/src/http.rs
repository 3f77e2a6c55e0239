//! JSON over HTTP for the session store. Payload schemas are described in
//! `docs/api.md`.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use labrisk_core::service::{CreateSession, Decision, LabeledRisk, RiskMethod, RiskQuery, RiskSource, SessionStore, SessionView};
use labrisk_core::{Error, ErrorKind};
use serde::{Deserialize, Serialize};

pub const DEFAULT_N_MC: u64 = 20_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                code: "bad_request".into(),
                message: message.into(),
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match e.kind() {
            ErrorKind::Usage => (StatusCode::BAD_REQUEST, "bad_request"),
            ErrorKind::NotFound => (StatusCode::NOT_FOUND, "not_found"),
            ErrorKind::Conflict => (StatusCode::CONFLICT, "conflict"),
            ErrorKind::Data => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable"),
            ErrorKind::NonConvergence => (StatusCode::UNPROCESSABLE_ENTITY, "non_convergence"),
        };
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: e.to_string(),
            },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
pub struct RiskParams {
    /// Comma-separated estimand ids.
    pub estimands: String,
    pub n_mc: Option<u64>,
    pub source: Option<RiskSource>,
    pub method: Option<RiskMethod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisksResponse {
    pub session_id: String,
    pub k: u32,
    pub risks: Vec<LabeledRisk>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub action: Decision,
    /// Hour the decision is meant for; rejected if the session has moved on.
    #[serde(default)]
    pub k: Option<u32>,
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", delete(remove))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/risks", get(risks))
        .route("/sessions/{id}/decision", post(decide))
        .with_state(store)
}

pub async fn serve(addr: &str, store: Arc<SessionStore>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store)).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> labrisk_core::Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody {
                code: "internal".into(),
                message: e.to_string(),
            },
        }),
    }
}

async fn create(
    State(store): State<Arc<SessionStore>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(request) = body?;
    let view = blocking(move || store.create(request)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn state(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(store.state(&id)?))
}

async fn remove(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    store.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn parse_estimands(text: &str) -> ApiResult<Vec<u8>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u8>()
                .map_err(|_| ApiError::bad_request(format!("`{s}` is not an estimand id")))
        })
        .collect()
}

async fn risks(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    params: Result<Query<RiskParams>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Json<RisksResponse>> {
    let Query(params) = params.map_err(|r| ApiError::bad_request(r.body_text()))?;
    let query = RiskQuery {
        estimands: parse_estimands(&params.estimands)?,
        n_mc: params.n_mc.unwrap_or(DEFAULT_N_MC),
        source: params.source.unwrap_or_default(),
        method: params.method.unwrap_or_default(),
    };
    let session_id = id.clone();
    let risks = blocking(move || store.risks(&id, &query)).await?;
    let k = risks.first().map_or(0, |r| r.k);
    Ok(Json(RisksResponse { session_id, k, risks }))
}

async fn decide(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let Json(request) = body?;
    Ok(Json(store.decide(&id, request.action, request.k)?))
}
