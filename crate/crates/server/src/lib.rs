//! HTTP front end for the study service, plus the file loaders shared with
//! the command-line tool.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use quizcram_core::events::LogError;
use quizcram_core::service::{Clock, ServiceError, SystemClock, WatchAction};
use quizcram_core::{
    convert_course, Course, CourseManifest, FileLog, InVideoQuizCourse, SchedulerConfig, StudyService,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Event logs live under `<storage_dir>/<course_id>/`.
    pub storage_dir: PathBuf,
    /// Course manifests, or in-video quiz courses to convert on load.
    pub courses: Vec<PathBuf>,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

impl ServerConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ServerConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.storage_dir = base.join(&cfg.storage_dir);
        for c in &mut cfg.courses {
            *c = base.join(&*c);
        }
        let s = &cfg.scheduler;
        cfg.scheduler = s
            .clone()
            .with_weights(s.performance_weight, s.watched_weight, s.recency_weight)
            .and_then(|s| s.validate().map(|()| s))
            .context("invalid [scheduler] section")?;
        Ok(cfg)
    }
}

/// Loads a course file. Files with a `segments` field are manifests;
/// anything else is read as an in-video quiz course and converted.
pub fn load_manifest(path: &Path) -> anyhow::Result<CourseManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("segments").is_some() {
        Ok(serde_json::from_value(value).with_context(|| format!("{} is not a course manifest", path.display()))?)
    } else {
        let source: InVideoQuizCourse = serde_json::from_value(value)
            .with_context(|| format!("{} is neither a manifest nor an in-video quiz course", path.display()))?;
        Ok(convert_course(&source).with_context(|| format!("converting {}", path.display()))?)
    }
}

pub fn load_course(path: &Path) -> anyhow::Result<Course> {
    let manifest = load_manifest(path)?;
    Course::new(manifest).with_context(|| format!("validating {}", path.display()))
}

/// Builds the service with one file log per course.
pub fn build_service(cfg: &ServerConfig, clock: Arc<dyn Clock>) -> anyhow::Result<StudyService> {
    let mut svc = StudyService::new(cfg.scheduler.clone(), clock);
    let mut seen = std::collections::BTreeSet::new();
    for path in &cfg.courses {
        let course = load_course(path)?;
        let id = course.course_id().to_string();
        if !seen.insert(id.clone()) {
            bail!("course {id} is configured twice");
        }
        let log =
            FileLog::open(cfg.storage_dir.join(&id)).with_context(|| format!("opening event log for course {id}"))?;
        svc.add_course(course, Box::new(log))?;
    }
    Ok(svc)
}

pub async fn serve(cfg: ServerConfig) -> anyhow::Result<()> {
    let svc = build_service(&cfg, Arc::new(SystemClock))?;
    let listener =
        tokio::net::TcpListener::bind(cfg.listen).await.with_context(|| format!("binding {}", cfg.listen))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(svc))).with_graceful_shutdown(shutdown_signal()).await?;
    Ok(())
}

/// Ctrl-C or SIGTERM; the service (and its logs' footers) drop afterwards.
async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("installing SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

pub fn router(svc: Arc<StudyService>) -> Router {
    Router::new()
        .route("/courses/{course_id}", get(get_course))
        .route("/sessions", post(start_session))
        .route("/sessions/{sid}", get(get_session))
        .route("/sessions/{sid}/question", get(get_question))
        .route("/sessions/{sid}/answers", post(submit_answer))
        .route("/sessions/{sid}/watch", post(report_watch))
        .route("/sessions/{sid}/timeline", get(get_timeline))
        .route("/sessions/{sid}/timeline/{qid}/expand", post(expand_timeline))
        .route("/sessions/{sid}/review", get(get_review))
        .route("/sessions/{sid}/skip-target", get(get_skip_target))
        .route("/sessions/{sid}/skip", post(confirm_skip))
        .with_state(svc)
}

type Svc = State<Arc<StudyService>>;

pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl ToString) -> Self {
        ApiError { status, body: json!({ "error": code, "message": message.to_string() }) }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use ServiceError as E;
        let (status, code) = match &e {
            E::CourseNotFound(_) => (StatusCode::NOT_FOUND, "course_not_found"),
            E::SessionNotFound(_) => (StatusCode::NOT_FOUND, "session_not_found"),
            E::VideoNotFound(_) => (StatusCode::NOT_FOUND, "video_not_found"),
            E::QuestionNotFound(_) => (StatusCode::NOT_FOUND, "question_not_found"),
            E::StaleQuestion { .. } => (StatusCode::CONFLICT, "stale_question"),
            E::PassIncomplete(_) => (StatusCode::CONFLICT, "initial_pass_incomplete"),
            E::Score(_) => (StatusCode::BAD_REQUEST, "invalid_answer"),
            E::HeartbeatTooLong { .. } => (StatusCode::BAD_REQUEST, "heartbeat_too_long"),
            E::Coverage(_) => (StatusCode::BAD_REQUEST, "position_out_of_bounds"),
            E::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            E::Log(LogError::UnsafeId(_)) => (StatusCode::BAD_REQUEST, "invalid_id"),
            E::Log(_) | E::Replay(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let mut err = ApiError::new(status, code, &e);
        if let E::PassIncomplete(p) = &e {
            err.body["remaining"] = json!(p.remaining);
        }
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn get_course(State(svc): Svc, UrlPath(course_id): UrlPath<String>) -> ApiResult<Json<CourseManifest>> {
    Ok(Json(svc.course(&course_id)?.clone()))
}

#[derive(Deserialize)]
struct StartSession {
    user_id: String,
    course_id: String,
}

async fn start_session(State(svc): Svc, Json(req): Json<StartSession>) -> ApiResult<Response> {
    let session = svc.start_session(&req.user_id, &req.course_id)?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn get_session(State(svc): Svc, UrlPath(sid): UrlPath<String>) -> ApiResult<Response> {
    Ok(Json(svc.session(&sid)?).into_response())
}

async fn get_question(State(svc): Svc, UrlPath(sid): UrlPath<String>) -> ApiResult<Response> {
    Ok(Json(svc.current_question(&sid)?).into_response())
}

#[derive(Deserialize)]
struct SubmitAnswer {
    question_id: String,
    selected: Vec<bool>,
}

async fn submit_answer(
    State(svc): Svc,
    UrlPath(sid): UrlPath<String>,
    Json(req): Json<SubmitAnswer>,
) -> ApiResult<Response> {
    match svc.submit_answer(&sid, &req.question_id, &req.selected) {
        Ok(outcome) => Ok(Json(outcome).into_response()),
        Err(e @ ServiceError::StaleQuestion { .. }) => {
            // The client is out of sync: hand back what it should be showing.
            let mut err = ApiError::from(e);
            err.body["current"] = serde_json::to_value(svc.current_question(&sid)?).expect("serializable");
            Err(err)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Deserialize)]
struct WatchReport {
    video_id: String,
    action: WatchAction,
    from_s: u32,
    /// Defaults to `from_s`; ignored for `play`.
    to_s: Option<u32>,
}

async fn report_watch(
    State(svc): Svc,
    UrlPath(sid): UrlPath<String>,
    Json(req): Json<WatchReport>,
) -> ApiResult<Response> {
    let to_s = req.to_s.unwrap_or(req.from_s);
    let regions = svc.report_watch(&sid, &req.video_id, req.from_s, to_s, req.action)?;
    Ok(Json(json!({ "video_id": req.video_id, "regions": regions })).into_response())
}

async fn get_timeline(State(svc): Svc, UrlPath(sid): UrlPath<String>) -> ApiResult<Response> {
    Ok(Json(svc.timeline(&sid)?).into_response())
}

async fn expand_timeline(State(svc): Svc, UrlPath((sid, qid)): UrlPath<(String, String)>) -> ApiResult<StatusCode> {
    svc.expand_timeline(&sid, &qid)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_review(State(svc): Svc, UrlPath(sid): UrlPath<String>) -> ApiResult<Response> {
    Ok(Json(svc.review(&sid)?).into_response())
}

#[derive(Deserialize)]
struct SkipQuery {
    video_id: String,
    position_s: u32,
}

async fn get_skip_target(
    State(svc): Svc,
    UrlPath(sid): UrlPath<String>,
    Query(q): Query<SkipQuery>,
) -> ApiResult<Response> {
    let target = svc.skip_target(&sid, &q.video_id, q.position_s)?;
    Ok(Json(json!({ "video_id": q.video_id, "position_s": q.position_s, "target_s": target })).into_response())
}

#[derive(Deserialize)]
struct ConfirmSkip {
    video_id: String,
    from_s: u32,
    to_s: u32,
}

async fn confirm_skip(
    State(svc): Svc,
    UrlPath(sid): UrlPath<String>,
    Json(req): Json<ConfirmSkip>,
) -> ApiResult<StatusCode> {
    svc.confirm_skip(&sid, &req.video_id, req.from_s, req.to_s)?;
    Ok(StatusCode::NO_CONTENT)
}
