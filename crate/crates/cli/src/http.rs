//! JSON API over a [`SessionRegistry`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use imk_core::{DecodeResponse, Error, PredictionGrid, SessionRegistry};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub const DEFAULT_HEATMAP_STEP: u32 = 40;

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Reported to the UI as the prefix for API calls; empty means same origin.
    pub api_base: String,
    /// Static UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    registry: Arc<SessionRegistry>,
    api_base: Arc<str>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub screen_w: u32,
    pub screen_h: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PointRequest {
    pub x: f64,
    pub y: f64,
    pub t_ms: i64,
}

#[derive(Debug, Deserialize)]
struct HeatmapQuery {
    step: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UiConfig {
    pub api_base: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
    pub max_len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::SessionNotFound(_) => StatusCode::NOT_FOUND,
        Error::Ordering { .. } | Error::Capacity { .. } | Error::EmptySession => StatusCode::CONFLICT,
        Error::InvalidArgument(_) | Error::SequenceLength { .. } | Error::Unencodable(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs a decode-bound call off the async workers.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> imk_core::Result<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(Error::InvalidArgument(format!("decode task failed: {e}")).into()),
    }
}

async fn create_session(State(s): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<SessionCreated> {
    let session_id = s.registry.create_session(req.screen_w, req.screen_h)?;
    Ok(Json(SessionCreated { session_id }))
}

async fn current(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<DecodeResponse> {
    Ok(Json(s.registry.current(&id)?))
}

async fn push_point(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(p): Json<PointRequest>,
) -> ApiResult<DecodeResponse> {
    blocking(move || s.registry.push_point(&id, p.x, p.y, p.t_ms)).await
}

async fn pop_point(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<DecodeResponse> {
    blocking(move || s.registry.pop_point(&id)).await
}

async fn heatmap(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HeatmapQuery>,
) -> ApiResult<PredictionGrid> {
    let step = q.step.unwrap_or(DEFAULT_HEATMAP_STEP);
    blocking(move || s.registry.heatmap(&id, step)).await
}

async fn healthz(State(s): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        sessions: s.registry.len(),
        max_len: s.registry.capacity(),
    })
}

async fn uiconfig(State(s): State<AppState>) -> Json<UiConfig> {
    Json(UiConfig {
        api_base: s.api_base.to_string(),
    })
}

pub fn router(registry: Arc<SessionRegistry>, opts: &ServeOptions) -> Router {
    let state = AppState {
        registry,
        api_base: opts.api_base.as_str().into(),
    };
    let api = Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/uiconfig", get(uiconfig))
        .route("/v1/session", post(create_session))
        .route("/v1/session/{id}", get(current))
        .route("/v1/session/{id}/point", post(push_point).delete(pop_point))
        .route("/v1/session/{id}/heatmap", get(heatmap))
        .with_state(state);
    match &opts.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
