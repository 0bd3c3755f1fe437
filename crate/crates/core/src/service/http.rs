//! axum routes. Pipeline work runs on the blocking pool because remote
//! providers use a blocking HTTP client.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use super::{ChatRequest, Engine, ServiceError};

pub const ADMIN_TOKEN_HEADER: &str = "x-admin-token";

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = match &self {
            ServiceError::Unprocessable(lines) => {
                json!({ "error": self.to_string(), "lines": lines })
            }
            // Internal details go to the log, not the client.
            ServiceError::Internal(detail) => {
                tracing::error!(%detail, "internal error");
                json!({ "error": "internal error" })
            }
            _ => json!({ "error": self.to_string() }),
        };
        (status, Json(body)).into_response()
    }
}

fn now() -> i64 {
    chrono::Utc::now().timestamp()
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn chat(State(engine): State<Arc<Engine>>, body: Bytes) -> Result<Response, ServiceError> {
    let req: ChatRequest = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::BadRequest(format!("invalid chat request: {e}")))?;
    let wire = blocking(move || engine.handle_chat(&req, now())).await?;
    Ok(Json(wire).into_response())
}

fn admin_token(headers: &HeaderMap) -> Option<String> {
    if let Some(v) = headers.get(ADMIN_TOKEN_HEADER) {
        return v.to_str().ok().map(str::to_string);
    }
    headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_string)
}

async fn ingest(
    State(engine): State<Arc<Engine>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let token = admin_token(&headers);
    let text = String::from_utf8(body.to_vec())
        .map_err(|_| ServiceError::BadRequest("body is not UTF-8".into()))?;
    let summary = blocking(move || engine.handle_ingest(&text, token.as_deref(), now())).await?;
    Ok(Json(summary).into_response())
}

async fn trace(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    Ok(Json(engine.get_trace(&id)?.as_ref().clone()).into_response())
}

async fn health(State(engine): State<Arc<Engine>>) -> Response {
    Json(engine.health()).into_response()
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/v1/chat", post(chat))
        .route("/v1/ingest", post(ingest))
        .route("/v1/trace/{id}", get(trace))
        .route("/v1/health", get(health))
        .with_state(engine)
}

/// Serves until the listener fails.
pub async fn serve(engine: Arc<Engine>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(engine)).await
}
