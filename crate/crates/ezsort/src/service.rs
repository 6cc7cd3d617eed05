//! HTTP annotation service under `/v1`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, CorsLayer};

use ezsort_core::{Outcome, RankedItem, SessionConfig, SessionStats, SessionStatus};

use crate::formats::{parse_items_jsonl, parse_similarities, FormatError};
use crate::store::{ExportBundle, SessionStore, StoreError, StoredSession};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    /// Exact origins allowed by CORS. Empty disables cross-origin access.
    pub allowed_origins: Vec<String>,
    /// Base directory for relative `display_ref` paths.
    pub image_root: PathBuf,
}

/// Error body: `{"code", "message", "details"}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    fn details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let body = json!({"code": self.code, "message": self.message, "details": self.details});
        (self.status, Json(body)).into_response()
    }
}

impl From<ezsort_core::Error> for ApiError {
    fn from(e: ezsort_core::Error) -> Self {
        use ezsort_core::Error as E;
        let msg = e.to_string();
        match e {
            E::StaleRequest { expected, got } => Self::new(StatusCode::CONFLICT, "stale_request", msg)
                .details(json!({"expected_request_id": expected, "request_id": got})),
            E::State(_) => Self::new(StatusCode::CONFLICT, "invalid_state", msg),
            E::UnknownItems(ids) => {
                Self::new(StatusCode::BAD_REQUEST, "unknown_items", msg).details(json!({"item_ids": ids}))
            }
            E::DuplicateItem(id) => {
                Self::new(StatusCode::BAD_REQUEST, "duplicate_item", msg).details(json!({"item_id": id}))
            }
            E::ReplayDivergence { seq, .. } => {
                Self::new(StatusCode::BAD_REQUEST, "replay_divergence", msg).details(json!({"seq": seq}))
            }
            E::Input(_) | E::UndefinedCorrelation => Self::new(StatusCode::BAD_REQUEST, "invalid_input", msg),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_) => Self::not_found(msg),
            StoreError::Exists(id) => {
                Self::new(StatusCode::CONFLICT, "already_exists", msg).details(json!({"session_id": id}))
            }
            StoreError::BadId(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_input", msg),
            StoreError::Engine(inner) => inner.into(),
            StoreError::Corrupt { .. } | StoreError::Io(_) | StoreError::Json(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg)
            }
        }
    }
}

impl From<FormatError> for ApiError {
    fn from(e: FormatError) -> Self {
        let details = serde_json::to_value(&e).unwrap_or(Value::Null);
        Self::new(StatusCode::BAD_REQUEST, "invalid_input", e.to_string()).details(details)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<Mutex<StoredSession>>;

#[derive(Clone)]
pub struct AppState {
    store: SessionStore,
    sessions: Arc<RwLock<HashMap<String, Shared>>>,
    image_root: PathBuf,
}

impl AppState {
    /// Opens the data directory and loads every session in it. Sessions
    /// that fail to load are logged and skipped.
    pub fn load(data_dir: &FsPath, image_root: PathBuf) -> Result<Self, StoreError> {
        let store = SessionStore::open(data_dir)?;
        let mut sessions = HashMap::new();
        for id in store.list()? {
            match store.load(&id) {
                Ok(s) => {
                    sessions.insert(id, Arc::new(Mutex::new(s)));
                }
                Err(e) => tracing::warn!(session = %id, "skipping session: {e}"),
            }
        }
        tracing::info!(count = sessions.len(), "sessions loaded");
        Ok(Self {
            store,
            sessions: Arc::new(RwLock::new(sessions)),
            image_root,
        })
    }

    fn get(&self, id: &str) -> ApiResult<Shared> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session `{id}` not found")))
    }

    fn insert(&self, s: StoredSession) -> String {
        let id = s.id().to_string();
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(s)));
        id
    }
}

pub fn router(state: AppState, allowed_origins: &[String]) -> Router {
    let origins: Vec<HeaderValue> = allowed_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/import", post(import_session))
        .route("/v1/sessions/{id}/next", get(next_request))
        .route("/v1/sessions/{id}/judgments", post(submit_judgment))
        .route("/v1/sessions/{id}/ranking", get(ranking))
        .route("/v1/sessions/{id}/stats", get(stats))
        .route("/v1/sessions/{id}/export", get(export))
        .route("/v1/sessions/{id}/items/{item_id}/image", get(image))
        .layer(cors)
        .with_state(state)
}

/// Loads sessions from the data directory, then binds. An occupied port
/// is reported as such.
pub async fn bind(cfg: &ServiceConfig) -> anyhow::Result<(tokio::net::TcpListener, AppState)> {
    let state = AppState::load(&cfg.data_dir, cfg.image_root.clone())?;
    let listener = match tokio::net::TcpListener::bind(cfg.bind).await {
        Ok(l) => l,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => {
            anyhow::bail!("address {} is already in use; pick another with --bind", cfg.bind)
        }
        Err(e) => return Err(anyhow::Error::new(e).context(format!("cannot bind {}", cfg.bind))),
    };
    Ok((listener, state))
}

/// Serves until ctrl-c.
pub async fn run(listener: tokio::net::TcpListener, state: AppState, allowed_origins: &[String]) -> anyhow::Result<()> {
    axum::serve(listener, router(state, allowed_origins))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

#[derive(Deserialize)]
struct CreateBody {
    items_jsonl: String,
    similarities: Value,
    #[serde(default)]
    config: Option<SessionConfig>,
}

#[derive(Serialize)]
struct Created {
    session_id: String,
    stats: SessionStats,
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(body) = body?;
    let items = parse_items_jsonl(&body.items_jsonl)?;
    let sims = parse_similarities(&body.similarities.to_string())?;
    let store = state.store.clone();
    let created = tokio::task::spawn_blocking(move || store.create(items, sims, body.config.unwrap_or_default()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let stats = created.session().stats();
    let session_id = state.insert(created);
    tracing::info!(session = %session_id, items = stats.items, "session created");
    Ok((StatusCode::CREATED, Json(Created { session_id, stats })))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Value> {
    let mut ids: Vec<String> = state.sessions.read().expect("session map poisoned").keys().cloned().collect();
    ids.sort();
    Json(json!({"sessions": ids}))
}

async fn import_session(
    State(state): State<AppState>,
    body: Result<Json<ExportBundle>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(bundle) = body?;
    let store = state.store.clone();
    let imported = tokio::task::spawn_blocking(move || store.import(bundle))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let stats = imported.session().stats();
    let session_id = state.insert(imported);
    Ok((StatusCode::CREATED, Json(Created { session_id, stats })))
}

#[derive(Serialize)]
struct ItemRef {
    id: String,
    image_url: String,
}

fn item_ref(session_id: &str, item_id: &str) -> ItemRef {
    ItemRef {
        id: item_id.into(),
        image_url: format!("/v1/sessions/{session_id}/items/{item_id}/image"),
    }
}

async fn next_request(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let shared = state.get(&id)?;
    let guard = shared.lock().await;
    let session = guard.session();
    let stats = session.stats();
    Ok(Json(match session.pending_record() {
        Some(req) => json!({
            "status": "pending",
            "request": {
                "request_id": req.request_id,
                "left": item_ref(&id, &req.left),
                "right": item_ref(&id, &req.right),
                "uncertainty": req.uncertainty,
                "theta": req.theta,
            },
            "progress": stats.progress,
        }),
        None => json!({
            "status": "done",
            "ranking_url": format!("/v1/sessions/{id}/ranking"),
            "progress": stats.progress,
        }),
    }))
}

#[derive(Deserialize)]
struct JudgmentBody {
    request_id: u64,
    outcome: Outcome,
}

async fn submit_judgment(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<JudgmentBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    let shared = state.get(&id)?;
    let mut guard = shared.lock_owned().await;
    // file writes are synced, so keep them off the async workers
    let (guard, res) = tokio::task::spawn_blocking(move || {
        let res = guard.submit(body.request_id, body.outcome);
        (guard, res)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    res?;
    let stats = guard.session().stats();
    Ok(Json(json!({"accepted": true, "stats": stats})))
}

#[derive(Serialize)]
struct RankingBody {
    session_id: String,
    ranking: Vec<RankedItem>,
}

async fn ranking(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RankingBody>> {
    let shared = state.get(&id)?;
    let guard = shared.lock().await;
    if guard.session().status() != SessionStatus::Completed {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "invalid_state",
            "session still has pending comparisons",
        ));
    }
    Ok(Json(RankingBody {
        session_id: id,
        ranking: guard.session().ranking()?,
    }))
}

async fn stats(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionStats>> {
    let shared = state.get(&id)?;
    let guard = shared.lock().await;
    Ok(Json(guard.session().stats()))
}

async fn export(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ExportBundle>> {
    let shared = state.get(&id)?;
    let guard = shared.lock().await;
    Ok(Json(guard.export()))
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

/// Resolves a relative display ref under `root`, refusing anything that
/// could step outside it.
fn resolve_image(root: &FsPath, display_ref: &str) -> Option<PathBuf> {
    let rel = FsPath::new(display_ref);
    if display_ref.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
        return None;
    }
    Some(root.join(rel))
}

async fn image(State(state): State<AppState>, Path((id, item_id)): Path<(String, String)>) -> ApiResult<Response> {
    let shared = state.get(&id)?;
    let display_ref = {
        let guard = shared.lock().await;
        let session = guard.session();
        let idx = session
            .item_index(&item_id)
            .ok_or_else(|| ApiError::not_found(format!("item `{item_id}` not in session")))?;
        session.items[idx].display_ref.clone()
    };
    if display_ref.starts_with("http://") || display_ref.starts_with("https://") {
        return Ok(Redirect::temporary(&display_ref).into_response());
    }
    let path = resolve_image(&state.image_root, &display_ref).ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", "display_ref is not a servable relative path")
            .details(json!({"display_ref": display_ref}))
    })?;
    match tokio::fs::read(&path).await {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(ApiError::not_found(format!("image file for `{item_id}` not found")))
        }
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}
