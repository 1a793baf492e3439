//! HTTP service that walks each rater through their blinded tasks.
//!
//! Raters authenticate with a per-rater bearer token and only ever receive
//! [`RaterView`]s; which side shows which model stays in the store. See
//! `API.md` for the JSON contract.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use monoalign::experiment::{ExperimentBundle, RaterView, Response, ResponseError, ResponseStore, Side};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<ResponseStore>>,
    raters: Arc<BTreeMap<String, String>>,
    admin_token: Arc<String>,
}

impl AppState {
    /// State over an append-only log at `log_path`, replaying existing entries.
    pub fn open(bundle: &ExperimentBundle, log_path: &Path) -> Result<Self, ResponseError> {
        let store = ResponseStore::open(log_path, bundle.tasks.clone())?;
        Ok(Self::with_store(bundle, store))
    }

    pub fn with_store(bundle: &ExperimentBundle, store: ResponseStore) -> Self {
        Self {
            store: Arc::new(Mutex::new(store)),
            raters: Arc::new(
                bundle
                    .tokens
                    .iter()
                    .map(|t| (t.token.clone(), t.rater.clone()))
                    .collect(),
            ),
            admin_token: Arc::new(bundle.admin_token.clone()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum TaskReply {
    Task { task: RaterView },
    Done { completed: usize, total: usize },
}

#[derive(Debug, Deserialize)]
pub struct ResponseBody {
    pub task_id: String,
    pub choice: Side,
    pub confidence: i64,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token")
    }
}

impl From<ResponseError> for ApiError {
    fn from(e: ResponseError) -> Self {
        let (status, code) = match &e {
            ResponseError::Duplicate(_) => (StatusCode::CONFLICT, "duplicate"),
            ResponseError::OutOfOrder { .. } => (StatusCode::BAD_REQUEST, "out_of_order"),
            ResponseError::ConfidenceOutOfRange(_) => (StatusCode::BAD_REQUEST, "confidence_out_of_range"),
            ResponseError::UnknownTask(_) => (StatusCode::BAD_REQUEST, "unknown_task"),
            ResponseError::UnknownRater(_) => (StatusCode::UNAUTHORIZED, "unauthorized"),
            ResponseError::Io { .. } | ResponseError::Corrupt { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "storage")
            }
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> HttpResponse {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn rater_of(state: &AppState, headers: &HeaderMap) -> Result<String, ApiError> {
    bearer(headers)
        .and_then(|t| state.raters.get(t))
        .cloned()
        .ok_or_else(ApiError::unauthorized)
}

async fn get_task(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<TaskReply>, ApiError> {
    let rater = rater_of(&state, &headers)?;
    let store = state.store.lock().expect("store lock");
    let (completed, total) = store.progress(&rater)?;
    Ok(Json(match store.current_task(&rater)? {
        Some(task) => TaskReply::Task {
            task: RaterView::new(task, completed + 1, total),
        },
        None => TaskReply::Done { completed, total },
    }))
}

async fn post_response(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(body): Json<ResponseBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let rater = rater_of(&state, &headers)?;
    let confidence = u8::try_from(body.confidence)
        .ok()
        .filter(|c| (1..=5).contains(c))
        .ok_or(ResponseError::ConfidenceOutOfRange(body.confidence))?;
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut store = state.store.lock().expect("store lock");
    store.submit(Response {
        task_id: body.task_id,
        rater: rater.clone(),
        choice: body.choice,
        confidence,
        timestamp,
    })?;
    let (completed, total) = store.progress(&rater)?;
    Ok(Json(json!({ "status": "recorded", "completed": completed, "total": total })))
}

async fn export(State(state): State<AppState>, headers: HeaderMap) -> Result<HttpResponse, ApiError> {
    match bearer(&headers) {
        Some(t) if t == state.admin_token.as_str() => {}
        Some(t) if state.raters.contains_key(t) => {
            return Err(ApiError::new(StatusCode::FORBIDDEN, "forbidden", "export needs the admin token"))
        }
        _ => return Err(ApiError::unauthorized()),
    }
    let body = state.store.lock().expect("store lock").export_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

/// Routes: `GET /task`, `POST /response`, `GET /export`, `GET /health` and,
/// when `static_dir` is given, `GET /static/*`.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/task", get(get_task))
        .route("/response", post(post_response))
        .route("/export", get(export))
        .route("/health", get(|| async { "ok" }));
    if let Some(dir) = static_dir {
        app = app.nest_service("/static", ServeDir::new(dir));
    }
    app.with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir)).await
}
