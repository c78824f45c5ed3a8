//! JSON-over-HTTP service for interactive planning.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/health` | | `ok` |
//! | POST | `/sessions` | `{spec, initial?, k?}` | `{session_id, revision}` |
//! | POST | `/sessions/{id}/message` | `{text}` | `{session_id, revision_index, layout, applied_route, applied_magnitude?, command?}` |
//! | GET | `/sessions/{id}/layout.svg` | `?revision=N` | SVG |
//! | GET | `/sessions/{id}/history` | | `{session_id, spec, revisions}` |
//! | POST | `/plan` | `{spec, k?}` | `{outcome, repair_count, demonstrations}` |
//! | POST | `/evaluate` | `{gen_file, ref_file, mode?, format?}` | evaluation report |
//!
//! Errors reply `{"error": code, "message"}`. When a token is configured
//! every route except `/health` needs `Authorization: Bearer <token>`.
//! Messages to one session are applied one at a time.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use layplan_core::codec::{LayoutFormat, ParseOutcome};
use layplan_core::geometry::Layout;
use layplan_core::metrics::{EmbeddingProvider, EvalReport, MatchConfig, MatchMode, RefItem};
use layplan_core::planner::{
    plan_layout, render_svg, retrieve_demonstrations, step_session, BackendError, ChatBackend, EditCommand, EditError, Origin,
    PromptSpec, RetrievalIndex, Revision, Session, SessionError, StepConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex as AsyncMutex;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::generations::{decode_generations, GenLine};
use crate::io::read_jsonl;
use crate::journal::{Journal, JournalError};
use crate::parallel;

pub const TOKEN_VAR: &str = "LAYPLAN_SERVICE_TOKEN";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub token: Option<String>,
    /// `/evaluate` only reads files below this directory.
    pub data_root: PathBuf,
    pub step: StepConfig,
    /// Repair turns for `/plan` and initial plans.
    pub plan_retries: u32,
    pub match_config: MatchConfig,
    pub workers: usize,
    /// Browser origins allowed to call the API; empty disables CORS headers.
    pub allowed_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            token: None,
            data_root: PathBuf::from("."),
            step: StepConfig::default(),
            plan_retries: 1,
            match_config: MatchConfig::default(),
            workers: 1,
            allowed_origins: Vec::new(),
        }
    }
}

type SharedSession = Arc<AsyncMutex<Session>>;

pub struct AppState {
    sessions: Mutex<HashMap<String, SharedSession>>,
    next_id: AtomicU64,
    backend: Option<Arc<dyn ChatBackend>>,
    provider: Arc<dyn EmbeddingProvider>,
    index: Option<Arc<RetrievalIndex>>,
    journal: Option<Journal>,
    config: ServiceConfig,
}

impl AppState {
    /// Restores journaled sessions when a journal is given.
    pub fn new(
        config: ServiceConfig,
        backend: Option<Arc<dyn ChatBackend>>,
        provider: Arc<dyn EmbeddingProvider>,
        index: Option<Arc<RetrievalIndex>>,
        journal: Option<Journal>,
    ) -> Result<Self, JournalError> {
        let restored = match &journal {
            Some(j) => j.load_all()?,
            None => Vec::new(),
        };
        let next = restored
            .iter()
            .filter_map(|s| s.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()))
            .max()
            .map_or(1, |n| n + 1);
        let sessions = restored
            .into_iter()
            .map(|s| (s.id.clone(), Arc::new(AsyncMutex::new(s))))
            .collect();
        Ok(Self {
            sessions: Mutex::new(sessions),
            next_id: AtomicU64::new(next),
            backend,
            provider,
            index,
            journal,
            config,
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session table").len()
    }

    fn session(&self, id: &str) -> Result<SharedSession, ApiError> {
        self.sessions
            .lock()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/message", post(post_message))
        .route("/sessions/{id}/layout.svg", get(get_svg))
        .route("/sessions/{id}/history", get(get_history))
        .route("/plan", post(plan))
        .route("/evaluate", post(evaluate))
        .route_layer(middleware::from_fn_with_state(state.clone(), authorize));
    let origins: Vec<HeaderValue> = state
        .config
        .allowed_origins
        .iter()
        .filter_map(|o| HeaderValue::from_str(o).ok())
        .collect();
    let app = Router::new()
        .route("/health", get(|| async { "ok" }))
        .merge(api)
        .with_state(state);
    if origins.is_empty() {
        return app;
    }
    app.layer(
        CorsLayer::new()
            .allow_origin(AllowOrigin::list(origins))
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE]),
    )
}

// ---- errors -----------------------------------------------------------------

#[derive(Debug)]
pub struct ApiError {
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

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Timeout(_) => Self::new(StatusCode::GATEWAY_TIMEOUT, "backend_timeout", e.to_string()),
            BackendError::Protocol(_) => Self::new(StatusCode::BAD_GATEWAY, "backend_protocol", e.to_string()),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::InvalidLayout(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_layout", msg),
            SessionError::InvalidSpec => Self::new(StatusCode::BAD_REQUEST, "invalid_spec", msg),
            SessionError::Edit(EditError::AmbiguousSelector { .. }) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "ambiguous_selector", msg),
            SessionError::Edit(EditError::SelectorNotFound(_)) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "selector_not_found", msg),
            SessionError::Edit(EditError::InvalidMagnitude(_)) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_magnitude", msg),
            SessionError::Edit(EditError::NoFeasibleMove(_)) => Self::new(StatusCode::CONFLICT, "no_feasible_move", msg),
            SessionError::Backend(b) => b.into(),
            SessionError::NoBackend => Self::new(StatusCode::SERVICE_UNAVAILABLE, "no_backend", msg),
            SessionError::Unparsable(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unparsable_reply", msg),
        }
    }
}

impl From<JournalError> for ApiError {
    fn from(e: JournalError) -> Self {
        Self::internal(e.to_string())
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::internal(format!("worker failed: {e}"))
}

// ---- auth -------------------------------------------------------------------

async fn authorize(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.config.token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

// ---- sessions ---------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct CreateSession {
    spec: PromptSpec,
    #[serde(default)]
    initial: Option<Layout>,
    #[serde(default)]
    k: usize,
}

#[derive(Debug, Serialize)]
struct SessionCreated {
    session_id: String,
    revision: Revision,
}

async fn create_session(State(state): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    if !req.spec.canvas_ok() {
        return Err(SessionError::InvalidSpec.into());
    }
    let initial = match (req.initial, &state.backend) {
        (Some(l), _) => l,
        (None, None) => Layout::new(req.spec.canvas_w, req.spec.canvas_h),
        (None, Some(_)) => {
            let outcome = run_plan(state.clone(), req.spec.clone(), req.k).await?.outcome;
            match outcome {
                ParseOutcome::Success { layout, .. } => layout,
                ParseOutcome::Failure { failure_reason, .. } => return Err(SessionError::Unparsable(failure_reason).into()),
            }
        }
    };
    let id = format!("s{:06}", state.next_id.fetch_add(1, Ordering::SeqCst));
    let session = Session::new(id.clone(), req.spec, initial)?;
    if let Some(j) = &state.journal {
        j.create(&session)?;
    }
    let revision = session.latest().clone();
    state
        .sessions
        .lock()
        .expect("session table")
        .insert(id.clone(), Arc::new(AsyncMutex::new(session)));
    log::info!("opened session {id}");
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id: id, revision })))
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    text: String,
}

#[derive(Debug, Serialize)]
struct MessageReply {
    session_id: String,
    revision_index: usize,
    layout: Layout,
    applied_route: Origin,
    #[serde(skip_serializing_if = "Option::is_none")]
    applied_magnitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    command: Option<EditCommand>,
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<MessageBody>,
) -> Result<Json<MessageReply>, ApiError> {
    let shared = state.session(&id)?;
    let mut guard = shared.lock_owned().await;
    let st = state.clone();
    // The edit may call the backend; keep it off the async workers.
    let revision = tokio::task::spawn_blocking(move || -> Result<Revision, ApiError> {
        let mut draft = guard.clone();
        let rev = step_session(&mut draft, &body.text, st.backend.as_deref(), &st.config.step)?.clone();
        if let Some(j) = &st.journal {
            j.record(&draft.id, &rev)?;
        }
        *guard = draft;
        Ok(rev)
    })
    .await
    .map_err(join_error)??;
    Ok(Json(MessageReply {
        session_id: id,
        revision_index: revision.index,
        layout: revision.layout,
        applied_route: revision.origin,
        applied_magnitude: revision.applied_magnitude,
        command: revision.command,
    }))
}

#[derive(Debug, Deserialize)]
struct SvgQuery {
    revision: Option<usize>,
}

async fn get_svg(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SvgQuery>,
) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let session = shared.lock().await;
    let layout = match q.revision {
        None => &session.latest().layout,
        Some(i) => &session
            .revisions()
            .get(i)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_revision", format!("no revision {i}")))?
            .layout,
    };
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], render_svg(layout)).into_response())
}

async fn get_history(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.lock().await;
    Ok(Json(json!({ "session_id": s.id, "spec": s.spec, "revisions": s.revisions() })))
}

// ---- planning ---------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct PlanBody {
    spec: PromptSpec,
    #[serde(default)]
    k: usize,
}

#[derive(Debug, Serialize)]
struct PlanReply {
    outcome: ParseOutcome,
    /// The final backend reply, verbatim.
    raw_reply: String,
    repair_count: u32,
    demonstrations: Vec<String>,
}

async fn run_plan(state: Arc<AppState>, spec: PromptSpec, k: usize) -> Result<PlanReply, ApiError> {
    if state.backend.is_none() {
        return Err(SessionError::NoBackend.into());
    }
    if k > 0 && state.index.is_none() {
        return Err(ApiError::bad_request("k > 0 needs a retrieval corpus; start the service with --corpus"));
    }
    tokio::task::spawn_blocking(move || {
        let empty = RetrievalIndex { entries: Vec::new() };
        let index = state.index.as_deref().unwrap_or(&empty);
        let demos = retrieve_demonstrations(&spec.caption, index, k, spec.format, state.provider.as_ref())
            .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "embedding", e.to_string()))?;
        let backend = state.backend.as_deref().expect("checked above");
        let r = plan_layout(&spec, &demos, backend, state.config.plan_retries)?;
        Ok(PlanReply {
            raw_reply: r.outcome.raw_text().to_owned(),
            outcome: r.outcome,
            repair_count: r.repair_count,
            demonstrations: demos.into_iter().map(|d| d.source_id).collect(),
        })
    })
    .await
    .map_err(join_error)?
}

async fn plan(State(state): State<Arc<AppState>>, Json(body): Json<PlanBody>) -> Result<Json<PlanReply>, ApiError> {
    if !body.spec.canvas_ok() {
        return Err(SessionError::InvalidSpec.into());
    }
    run_plan(state, body.spec, body.k).await.map(Json)
}

// ---- evaluation -------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct EvaluateBody {
    gen_file: PathBuf,
    ref_file: PathBuf,
    #[serde(default = "default_mode")]
    mode: MatchMode,
    #[serde(default = "default_format")]
    format: LayoutFormat,
}

fn default_mode() -> MatchMode {
    MatchMode::Closed
}

fn default_format() -> LayoutFormat {
    LayoutFormat::IntList128
}

/// Joins a relative path onto `root`, refusing anything that could leave it.
fn confined(root: &Path, rel: &Path) -> Result<PathBuf, ApiError> {
    if rel.as_os_str().is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "path_not_allowed",
            format!("`{}` must be a relative path inside the data directory", rel.display()),
        ));
    }
    Ok(root.join(rel))
}

async fn evaluate(State(state): State<Arc<AppState>>, Json(body): Json<EvaluateBody>) -> Result<Json<EvalReport>, ApiError> {
    let gen_path = confined(&state.config.data_root, &body.gen_file)?;
    let ref_path = confined(&state.config.data_root, &body.ref_file)?;
    tokio::task::spawn_blocking(move || {
        let refs: Vec<RefItem> = read_jsonl(&ref_path).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let lines: Vec<GenLine> = read_jsonl(&gen_path).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let gen = decode_generations(&lines, body.format, &refs);
        let cfg = &state.config;
        parallel::evaluate(&gen, &refs, body.mode, state.provider.as_ref(), &cfg.match_config, cfg.workers)
            .map(Json)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "evaluation", e.to_string()))
    })
    .await
    .map_err(join_error)?
}
