//! HTTP API over [`tokenlattice::session`].
//!
//! Reads work on published snapshots and never take a session's mutation
//! lock; mutations on one session are serialized.

mod error;
pub mod query;

pub use error::{ApiError, ErrorBody, ErrorCode};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};
use tokenlattice::client::{looks_like_jsonl, parse_corpus, CompletionProvider, Sampler};
use tokenlattice::generation::RawGeneration;
use tokenlattice::segment::SegmentationMode;
use tokenlattice::session::{
    generation_items, graph_view, ComparisonLayout, GenerationItem, LatticeEngine, PromptConfig, Session, Snapshot,
    ViewState,
};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub type SharedSampler = Arc<Sampler<Arc<dyn CompletionProvider>>>;

struct SessionSlot {
    session: Mutex<Session>,
    published: RwLock<Arc<Snapshot>>,
}

impl SessionSlot {
    fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.published.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Runs a mutation and publishes the resulting snapshot.
    fn mutate<T>(&self, f: impl FnOnce(&mut Session) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let mut session = self.session.lock().unwrap_or_else(|e| e.into_inner());
        let out = f(&mut session);
        *self.published.write().unwrap_or_else(|e| e.into_inner()) = session.current();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub session_id: String,
    pub prompt_id: String,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

pub struct AppState {
    engine: Arc<LatticeEngine>,
    sampler: SharedSampler,
    default_model: String,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    jobs: Mutex<HashMap<String, Job>>,
}

impl AppState {
    pub fn new(engine: Arc<LatticeEngine>, sampler: SharedSampler, default_model: impl Into<String>) -> Self {
        Self {
            engine,
            sampler,
            default_model: default_model.into(),
            sessions: RwLock::default(),
            jobs: Mutex::default(),
        }
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session `{id}`")))
    }

    fn put_job(&self, job: Job) {
        self.jobs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(job.job_id.clone(), job);
    }
}

/// Routes plus CORS. `cors_origin` of `None` allows any origin.
pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router, ApiError> {
    let origin = match cors_origin {
        None | Some("*") => AllowOrigin::any(),
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o).map_err(|_| ApiError::bad_request(format!("bad CORS origin `{o}`")))?,
        ),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE, header::IF_NONE_MATCH])
        .expose_headers([header::ETAG, header::LOCATION]);
    Ok(Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/prompts", post(add_prompt))
        .route("/sessions/{id}/graph", get(get_graph))
        .route("/sessions/{id}/generations", get(get_generations))
        .route("/jobs/{id}", get(get_job))
        .fallback(|| async { ApiError::not_found("no such route") })
        .layer(cors)
        .with_state(state))
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn query_pairs(q: Result<Query<Vec<(String, String)>>, QueryRejection>) -> Result<Vec<(String, String)>, ApiError> {
    q.map(|Query(p)| p).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

/// Initial view settings for a new session.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    threshold: Option<f64>,
    lambda: Option<f64>,
    longtail: Option<f64>,
    mode: Option<SegmentationMode>,
    comparison: Option<ComparisonLayout>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Created {
    session_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let mut session = Session::new(Arc::clone(&state.engine));
    if let Some(t) = req.threshold {
        session.set_merge_threshold(t)?;
    }
    if let Some(l) = req.lambda {
        session.set_lambda(l)?;
    }
    if let Some(l) = req.longtail {
        session.set_longtail(l)?;
    }
    if let Some(m) = req.mode {
        session.set_mode(m)?;
    }
    if let Some(c) = req.comparison {
        session.set_comparison_layout(c)?;
    }
    if let Some(s) = req.seed {
        session.set_seed(s)?;
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let slot = Arc::new(SessionSlot {
        published: RwLock::new(session.current()),
        session: Mutex::new(session),
    });
    state
        .sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id.clone(), slot);
    log::info!("created session {id}");
    let location = HeaderValue::from_str(&format!("/sessions/{id}")).expect("ascii id");
    Ok((
        StatusCode::CREATED,
        [(header::LOCATION, location)],
        Json(Created { session_id: id }),
    )
        .into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub snapshot_id: u64,
    pub snapshot_digest: String,
    pub prompts: Vec<PromptConfig>,
    pub generation_counts: BTreeMap<String, usize>,
    pub view_state: ViewState,
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionInfo>, ApiError> {
    let snap = state.slot(&id)?.snapshot();
    let mut counts: BTreeMap<String, usize> = snap.prompts.iter().map(|p| (p.prompt_id.clone(), 0)).collect();
    for g in &snap.generations {
        *counts.entry(g.prompt_id.clone()).or_default() += 1;
    }
    Ok(Json(SessionInfo {
        session_id: id,
        snapshot_id: snap.id,
        snapshot_digest: snap.digest(),
        prompts: snap.prompts.clone(),
        generation_counts: counts,
        view_state: snap.view.clone(),
    }))
}

/// A prompt plus, optionally, its completions. Without `generations` or
/// `corpus` the service samples `n_generations` completions in a job.
#[derive(Debug, Deserialize)]
struct AddPrompt {
    #[serde(flatten)]
    config: PromptConfig,
    /// Completion texts, in sampling order.
    #[serde(default)]
    generations: Option<Vec<String>>,
    /// A corpus file's content: JSON lines or one completion per line.
    #[serde(default)]
    corpus: Option<String>,
}

#[derive(Serialize)]
struct Accepted {
    job_id: String,
    prompt_id: String,
    status: JobStatus,
}

fn inline_generations(req: &AddPrompt) -> Result<Option<Vec<RawGeneration>>, ApiError> {
    let prompt_id = &req.config.prompt_id;
    let gens = match (&req.generations, &req.corpus) {
        (Some(_), Some(_)) => return Err(ApiError::bad_request("give either `generations` or `corpus`, not both")),
        (None, None) => return Ok(None),
        (Some(texts), None) => {
            let lines: Vec<String> = texts
                .iter()
                .map(|t| serde_json::json!({ "text": t }).to_string())
                .collect();
            parse_corpus(&lines.join("\n"), prompt_id, true)?
        }
        (None, Some(corpus)) => parse_corpus(corpus, prompt_id, looks_like_jsonl(corpus))?,
    };
    if let Some(g) = gens.iter().find(|g| &g.prompt_id != prompt_id) {
        return Err(ApiError::bad_request(format!(
            "corpus record `{}` names prompt `{}`, expected `{prompt_id}`",
            g.id, g.prompt_id
        )));
    }
    if gens.is_empty() {
        return Err(ApiError::bad_request("inline corpus has no completions"));
    }
    Ok(Some(gens))
}

async fn add_prompt(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let mut req: AddPrompt =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))?;
    if req.config.model_id.is_empty() {
        req.config.model_id = state.default_model.clone();
    }
    req.config.validate()?;
    let inline = inline_generations(&req)?;
    let prompt_id = req.config.prompt_id.clone();
    let job_id = uuid::Uuid::new_v4().simple().to_string();
    let mut job = Job {
        job_id: job_id.clone(),
        session_id: id.clone(),
        prompt_id: prompt_id.clone(),
        status: JobStatus::Running,
        generation_count: None,
        error: None,
    };

    let config = req.config.clone();
    let imported = inline.clone();
    let inline_slot = Arc::clone(&slot);
    blocking(move || {
        inline_slot.mutate(|s| {
            s.add_prompt(config)?;
            if let Some(gens) = imported {
                let pid = gens[0].prompt_id.clone();
                if let Err(e) = s.add_generations(&pid, gens) {
                    s.undo()?;
                    return Err(e.into());
                }
            }
            Ok(())
        })
    })
    .await?;

    match inline {
        Some(gens) => {
            job.status = JobStatus::Succeeded;
            job.generation_count = Some(gens.len());
            state.put_job(job);
        }
        None => {
            state.put_job(job);
            let state = Arc::clone(&state);
            let cfg = req.config;
            let job_id = job_id.clone();
            tokio::spawn(async move {
                let sampler = Arc::clone(&state.sampler);
                let pid = cfg.prompt_id.clone();
                let outcome = blocking(move || {
                    let request = sampler.request(cfg.prompt_text, cfg.model_id, cfg.temperature, cfg.n_generations);
                    let gens = sampler.sample(&request, &pid)?;
                    let n = gens.len();
                    slot.mutate(|s| s.add_generations(&pid, gens).map_err(ApiError::from))?;
                    Ok(n)
                })
                .await;
                let mut jobs = state.jobs.lock().unwrap_or_else(|e| e.into_inner());
                if let Some(job) = jobs.get_mut(&job_id) {
                    match outcome {
                        Ok(n) => {
                            job.status = JobStatus::Succeeded;
                            job.generation_count = Some(n);
                        }
                        Err(e) => {
                            log::warn!("sampling job {job_id} failed: {}", e.message);
                            job.status = JobStatus::Failed;
                            job.error = Some(e);
                        }
                    }
                }
            });
        }
    }
    let status = state.jobs.lock().unwrap_or_else(|e| e.into_inner())[&job_id].status;
    let location = HeaderValue::from_str(&format!("/jobs/{job_id}")).expect("ascii id");
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, location)],
        Json(Accepted {
            job_id,
            prompt_id,
            status,
        }),
    )
        .into_response())
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Job>, ApiError> {
    state
        .jobs
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("job `{id}`")))
}

async fn get_graph(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    query: Result<Query<Vec<(String, String)>>, QueryRejection>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let q = query::graph_query(&query_pairs(query)?)?;
    let snap = slot.snapshot();
    let engine = Arc::clone(&state.engine);
    let view = blocking(move || Ok(graph_view(&engine, &snap, &q)?)).await?;
    let etag = view.etag();
    let tag = HeaderValue::from_str(&etag).expect("hex etag");
    let cache = (header::CACHE_CONTROL, HeaderValue::from_static("no-cache"));
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == etag || t.trim() == "*"));
    if matches {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, tag), cache]).into_response());
    }
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (header::ETAG, tag),
            cache,
        ],
        view.to_json(),
    )
        .into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerationList {
    pub snapshot_id: u64,
    pub items: Vec<GenerationItem>,
}

async fn get_generations(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    query: Result<Query<Vec<(String, String)>>, QueryRejection>,
) -> Result<Json<GenerationList>, ApiError> {
    let slot = state.slot(&id)?;
    let selection = query::list_selection(&query_pairs(query)?)?;
    let snap = slot.snapshot();
    let engine = Arc::clone(&state.engine);
    let list = blocking(move || {
        Ok(GenerationList {
            snapshot_id: snap.id,
            items: generation_items(&engine, &snap, selection.as_deref())?,
        })
    })
    .await?;
    Ok(Json(list))
}
