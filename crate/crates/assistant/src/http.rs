//! JSON endpoints over an [`AssistantService`].
//!
//! | method | path               | body / query                      |
//! |--------|--------------------|-----------------------------------|
//! | POST   | `/v1/query`        | `{user_id, question, top_n?}`     |
//! | GET    | `/v1/history`      | `?limit=&user_id=`                |
//! | GET    | `/v1/corpus/stats` |                                   |
//! | GET    | `/healthz`         |                                   |

use std::future::Future;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ragraft_core::service::{AssistantService, ServiceError};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

pub const DEFAULT_HISTORY_LIMIT: usize = 20;
pub const MAX_HISTORY_LIMIT: usize = 1000;

#[derive(Debug, Deserialize)]
pub struct QueryRequest {
    /// Missing or unknown users get public access only.
    #[serde(default)]
    pub user_id: String,
    pub question: String,
    #[serde(default)]
    pub top_n: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct HistoryParams {
    pub limit: Option<usize>,
    pub user_id: Option<String>,
}

pub fn router(service: Arc<AssistantService>) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/v1/query", post(query))
        .route("/v1/history", get(history))
        .route("/v1/corpus/stats", get(stats))
        .with_state(service)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn query(State(service): State<Arc<AssistantService>>, Json(req): Json<QueryRequest>) -> Response {
    // Retrieval and generation block (remote calls), so keep them off the
    // async workers.
    let outcome =
        tokio::task::spawn_blocking(move || service.handle_query(&req.user_id, &req.question, req.top_n)).await;
    match outcome {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => error_response(e),
        Err(e) => {
            tracing::error!(error = %e, "query task failed");
            (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "internal error"}))).into_response()
        }
    }
}

fn error_response(e: ServiceError) -> Response {
    match e {
        ServiceError::EmptyQuestion => (StatusCode::BAD_REQUEST, Json(json!({"error": e.to_string()}))).into_response(),
        ServiceError::Generation { message, provenance, degraded } => (
            StatusCode::BAD_GATEWAY,
            Json(json!({"error": format!("generation failed: {message}"), "provenance": provenance, "degraded": degraded})),
        )
            .into_response(),
        other => {
            tracing::error!(error = %other, "query failed");
            (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": other.to_string()}))).into_response()
        }
    }
}

/// Only the caller's own questions are returned; answers may quote
/// documents other users cannot read.
async fn history(State(service): State<Arc<AssistantService>>, Query(params): Query<HistoryParams>) -> Response {
    let limit = params.limit.unwrap_or(DEFAULT_HISTORY_LIMIT).min(MAX_HISTORY_LIMIT);
    let user = params.user_id.as_deref().filter(|u| !u.is_empty());
    Json(service.history().fetch_for(user, limit)).into_response()
}

async fn stats(State(service): State<Arc<AssistantService>>) -> Response {
    Json(service.stats()).into_response()
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    service: Arc<AssistantService>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await
}
