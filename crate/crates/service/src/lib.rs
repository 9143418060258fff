//! HTTP interface: axis upload, dialog sessions, queries, inference and
//! case retrieval. Bodies are JSON; keys, situations and expressions use
//! their canonical text forms.

pub mod dialog;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use semindex_core::cbr::{DefaultSimilarity, SequenceMode};
use semindex_core::indexer::render_indexed;
use semindex_core::{index_hierarchy, infer_most_specific, parse_dconcepts, parse_hierarchy, Key, Situation};
use semindex_store::{Case, EpisodeKey, InstanceRecord, Store, StoreError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use dialog::{Answer, DialogError, DialogSession, Question, Selection, Status};

/// D-concept set used when a request names none.
pub const DEFAULT_DCONCEPTS: &str = "default";

pub struct AppState {
    store: Mutex<Store>,
    sessions: Mutex<HashMap<String, Arc<Mutex<DialogSession>>>>,
    next_session: AtomicU64,
}

impl AppState {
    pub fn new(store: Store) -> Arc<Self> {
        Arc::new(AppState { store: Mutex::new(store), sessions: Mutex::new(HashMap::new()), next_session: AtomicU64::new(1) })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<DialogSession>>, ApiError> {
        self.sessions
            .lock()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))
    }

    fn store(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().expect("store")
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::UnknownAxis(_)
            | StoreError::UnknownEpisode(_)
            | StoreError::UnknownCase(_)
            | StoreError::UnknownDConcepts(_) => StatusCode::NOT_FOUND,
            StoreError::AxisExists(_) | StoreError::DuplicateEpisode(_) | StoreError::VersionMismatch { .. } => {
                StatusCode::CONFLICT
            }
            StoreError::Sqlite(_) | StoreError::Json(_) | StoreError::Location { .. } | StoreError::Corrupt(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<DialogError> for ApiError {
    fn from(e: DialogError) -> Self {
        let status = match &e {
            DialogError::UnknownNode(_) | DialogError::Selection(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::CONFLICT,
        };
        ApiError::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/axes", post(post_axis))
        .route("/axes/{axis}/index", get(get_index))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/question", get(get_question))
        .route("/sessions/{id}/answer", post(post_answer))
        .route("/sessions/{id}/back", post(post_back))
        .route("/sessions/{id}/commit", post(commit))
        .route("/query", get(query))
        .route("/infer", post(infer))
        .route("/dconcepts", post(post_dconcepts))
        .route("/cbr/retrieve", post(retrieve))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, store: Store) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(store))).await
}

#[derive(Deserialize)]
struct AxisUpload {
    hierarchy: String,
}

#[derive(Serialize, Deserialize)]
pub struct AxisView {
    pub axis: String,
    pub version: u64,
    pub title: Option<String>,
    pub index: String,
}

async fn post_axis(State(st): State<Arc<AppState>>, Json(body): Json<AxisUpload>) -> Result<(StatusCode, Json<AxisView>), ApiError> {
    let h = parse_hierarchy(&body.hierarchy).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let ix = index_hierarchy(&h).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let info = st.store().register_axis(&ix)?;
    Ok((
        StatusCode::CREATED,
        Json(AxisView { axis: info.axis, version: info.version, title: info.title, index: render_indexed(&ix) }),
    ))
}

async fn get_index(State(st): State<Arc<AppState>>, Path(axis): Path<String>) -> ApiResult<AxisView> {
    let store = st.store();
    let a = store.axis(&axis)?;
    Ok(Json(AxisView {
        axis,
        version: a.version,
        title: a.index.hierarchy().title.clone(),
        index: render_indexed(&a.index),
    }))
}

#[derive(Deserialize)]
struct NewSession {
    axis: String,
}

#[derive(Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub axis: String,
    pub status: Status,
    pub question: Option<Question>,
    pub trail: Vec<Answer>,
}

fn view(s: &DialogSession) -> SessionView {
    SessionView {
        id: s.id().to_string(),
        axis: s.axis().to_string(),
        status: s.status(),
        question: s.question(),
        trail: s.answers(),
    }
}

async fn create_session(State(st): State<Arc<AppState>>, Json(body): Json<NewSession>) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let index = Arc::new(st.store().axis(&body.axis)?.index.clone());
    let id = format!("s{}", st.next_session.fetch_add(1, Ordering::Relaxed));
    let session = DialogSession::new(&id, &body.axis, index);
    let v = view(&session);
    st.sessions.lock().expect("session table").insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(v)))
}

async fn get_question(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let s = st.session(&id)?;
    let s = s.lock().expect("session");
    Ok(Json(view(&s)))
}

#[derive(Deserialize)]
struct AnswerBody {
    node: semindex_core::NodeId,
    #[serde(flatten)]
    selection: Selection,
}

async fn post_answer(State(st): State<Arc<AppState>>, Path(id): Path<String>, Json(body): Json<AnswerBody>) -> ApiResult<SessionView> {
    let s = st.session(&id)?;
    let mut s = s.lock().expect("session");
    s.answer(body.node, &body.selection)?;
    Ok(Json(view(&s)))
}

async fn post_back(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let s = st.session(&id)?;
    let mut s = s.lock().expect("session");
    s.back()?;
    Ok(Json(view(&s)))
}

#[derive(Deserialize)]
struct CommitParams {
    #[serde(default)]
    infer: bool,
    dconcepts: Option<String>,
}

#[derive(Deserialize, Default)]
struct CommitBody {
    id: Option<String>,
    timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    subject: String,
}

#[derive(Serialize, Deserialize)]
pub struct Committed {
    pub episode: EpisodeKey,
    pub instances: Vec<InstanceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub most_specific: Option<Vec<String>>,
}

fn json_body<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(ApiError::bad_request)
}

fn most_specific(store: &Store, set: Option<&str>, s: &Situation) -> Result<Vec<String>, ApiError> {
    let source = store.get_dconcepts(set.unwrap_or(DEFAULT_DCONCEPTS))?;
    let h = parse_dconcepts(&source).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(infer_most_specific(&h, s))
}

async fn commit(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<CommitParams>,
    body: Bytes,
) -> Result<(StatusCode, Json<Committed>), ApiError> {
    let body: CommitBody = json_body(&body)?;
    let s = st.session(&id)?;
    let mut s = s.lock().expect("session");
    let episode = s.episode(body.id.as_deref().unwrap_or(&id), body.timestamp.unwrap_or_else(Utc::now), &body.subject)?;
    let mut store = st.store();
    let inferred = if params.infer {
        Some(most_specific(&store, params.dconcepts.as_deref(), &episode.situation())?)
    } else {
        None
    };
    let key = store.put_episode(&episode)?;
    s.freeze()?;
    let stored = store.get_episode(&key)?.ok_or_else(|| StoreError::UnknownEpisode(key.clone()))?;
    Ok((StatusCode::CREATED, Json(Committed { episode: key, instances: stored.instances, most_specific: inferred })))
}

#[derive(Deserialize)]
struct QueryParams {
    axis: String,
    key: String,
}

#[derive(Serialize, Deserialize)]
pub struct Hit {
    pub episode: EpisodeKey,
    pub record: InstanceRecord,
}

async fn query(State(st): State<Arc<AppState>>, Query(q): Query<QueryParams>) -> ApiResult<Vec<Hit>> {
    let key: Key = q.key.parse().map_err(ApiError::bad_request)?;
    let hits = st.store().query_by_key(&q.axis, &key)?;
    Ok(Json(hits.into_iter().map(|(episode, record)| Hit { episode, record }).collect()))
}

#[derive(Deserialize)]
struct InferBody {
    situation: Situation,
    dconcepts: Option<String>,
}

async fn infer(State(st): State<Arc<AppState>>, Json(body): Json<InferBody>) -> ApiResult<serde_json::Value> {
    let names = most_specific(&st.store(), body.dconcepts.as_deref(), &body.situation)?;
    Ok(Json(json!({ "most_specific": names })))
}

#[derive(Deserialize)]
struct DConceptUpload {
    name: Option<String>,
    source: String,
}

async fn post_dconcepts(State(st): State<Arc<AppState>>, Json(body): Json<DConceptUpload>) -> Result<StatusCode, ApiError> {
    st.store().put_dconcepts(body.name.as_deref().unwrap_or(DEFAULT_DCONCEPTS), &body.source)?;
    Ok(StatusCode::CREATED)
}

#[derive(Deserialize)]
struct RetrieveBody {
    situation: Situation,
    k: usize,
    #[serde(default)]
    mode: SequenceMode,
}

#[derive(Serialize, Deserialize)]
pub struct Retrieved {
    pub case: Case,
    pub score: f64,
}

async fn retrieve(State(st): State<Arc<AppState>>, Json(body): Json<RetrieveBody>) -> ApiResult<Vec<Retrieved>> {
    if body.k == 0 {
        return Err(ApiError::bad_request("k must be positive"));
    }
    let ranked = st.store().retrieve(&body.situation, body.k, &DefaultSimilarity, body.mode)?;
    Ok(Json(ranked.into_iter().map(|(case, score)| Retrieved { case, score }).collect()))
}
