//! HTTP/JSON service for interactive exploration: uploaded logs, trained
//! models with their cached score series, and the analyses built on them.
//!
//! Models are scored once when training finishes and published atomically;
//! every later request (drift for any window, densities, breakdowns,
//! outliers) reads the cached scores.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::analysis::{attribute_density, decompose_attribute, flag_outliers, DEFAULT_MAD_K};
use crate::drift::{
    detect_drift_points, segment_at, segment_log, segments_from_ranges, sliding_window_pvalues, DriftPoint,
    PValueSeries, Segment, DEFAULT_THRESHOLD,
};
use crate::error::Error;
use crate::eventlog::{parse_reader, EventLog, Schema};
use crate::parameters::{train_model, EdbnModel};
use crate::plot::PlotDocument;
use crate::scoring::{score_log, trace_means, TraceScore};
use crate::structure::StructureConfig;

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    pub port: u16,
    /// Uploaded logs and trained models are also written here when set.
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} '{id}'"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } | Error::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct LogEntry {
    log: Arc<EventLog>,
    training: Option<String>,
}

/// A trained, scored model. Immutable apart from its segment set and the
/// drift cache.
pub struct ReadyModel {
    pub model: EdbnModel,
    pub scores: Vec<TraceScore>,
    pub means: Vec<f64>,
    pub training_traces: Option<usize>,
    drift_cache: Mutex<HashMap<DriftKey, Arc<Value>>>,
    segments: RwLock<Vec<Segment>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct DriftKey {
    window: usize,
    step: usize,
    threshold_bits: u64,
    min_separation: usize,
}

enum ModelStatus {
    Training,
    Ready(Arc<ReadyModel>),
    Failed(String),
}

struct ModelEntry {
    log_id: String,
    status: ModelStatus,
    score_runs: usize,
}

#[derive(Default)]
struct Store {
    logs: HashMap<String, LogEntry>,
    models: HashMap<String, ModelEntry>,
    next_log: usize,
    next_model: usize,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    data_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(data_dir: Option<PathBuf>) -> Self {
        Self {
            store: Arc::default(),
            data_dir,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn ready(&self, id: &str) -> ApiResult<Arc<ReadyModel>> {
        let store = self.lock();
        match store.models.get(id).map(|m| &m.status) {
            None => Err(ApiError::not_found("model", id)),
            Some(ModelStatus::Ready(m)) => Ok(m.clone()),
            Some(ModelStatus::Training) => Err(ApiError::new(StatusCode::CONFLICT, format!("model '{id}' is still training"))),
            Some(ModelStatus::Failed(e)) => Err(ApiError::invalid(format!("model '{id}' failed to train: {e}"))),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/logs", post(upload_log))
        .route("/logs/:id/models", post(create_model))
        .route("/models/:id", get(model_status))
        .route("/models/:id/scores", get(model_scores))
        .route("/models/:id/drift", get(model_drift))
        .route("/models/:id/segments", post(create_segments).get(list_segments))
        .route("/models/:id/segments/:sid/density", get(segment_density))
        .route("/models/:id/segments/:sid/decompose", get(segment_decompose))
        .route("/models/:id/outliers", get(model_outliers))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(config: ServerConfig) -> std::io::Result<()> {
    if let Some(dir) = &config.data_dir {
        std::fs::create_dir_all(dir)?;
    }
    let app = router(AppState::new(config.data_dir));
    let addr = SocketAddr::from(([127, 0, 0, 1], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await
}

#[derive(Debug, Deserialize)]
struct UploadParams {
    #[serde(default = "default_trace_id")]
    trace_id: String,
    timestamp: Option<String>,
}

fn default_trace_id() -> String {
    "case".into()
}

async fn upload_log(
    State(state): State<AppState>,
    Query(params): Query<UploadParams>,
    body: String,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let header: Vec<String> = {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        rdr.headers()
            .map_err(|e| ApiError::invalid(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect()
    };
    let schema = Schema::infer(&header, &params.trace_id, params.timestamp.as_deref())?;
    let log = tokio::task::spawn_blocking(move || parse_reader(body.as_bytes(), &schema).map(|l| (l, body)))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let (log, body) = log?;
    let summary = json!({
        "traces": log.trace_count(),
        "events": log.event_count(),
        "attributes": log.attribute_names(),
    });
    let id = {
        let mut store = state.lock();
        store.next_log += 1;
        let id = format!("l{}", store.next_log);
        store.logs.insert(
            id.clone(),
            LogEntry {
                log: Arc::new(log),
                training: None,
            },
        );
        id
    };
    if let Some(dir) = &state.data_dir {
        let path = dir.join(format!("{id}.csv"));
        std::fs::write(&path, body).map_err(|e| ApiError::from(Error::io(&path, e)))?;
    }
    let mut out = summary;
    out["log_id"] = json!(id);
    Ok((StatusCode::CREATED, Json(out)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRequest {
    train_events: Option<usize>,
    /// Half-open trace range `[start, end)` used as training data.
    segment: Option<(usize, usize)>,
    fd_threshold: Option<f64>,
    k_max: Option<usize>,
}

const DEFAULT_TRAIN_EVENTS: usize = 30_000;

async fn create_model(
    State(state): State<AppState>,
    Path(log_id): Path<String>,
    body: Option<Json<ModelRequest>>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req = body.map(|b| b.0).unwrap_or_default();
    let mut config = StructureConfig::default();
    if let Some(t) = req.fd_threshold {
        config.fd_threshold = t;
    }
    if let Some(k) = req.k_max {
        config.k_max = k;
    }
    config.validate()?;

    let (log, model_id) = {
        let mut store = state.lock();
        let entry = store.logs.get(&log_id).ok_or_else(|| ApiError::not_found("log", &log_id))?;
        if let Some(job) = &entry.training {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("log '{log_id}' already has training job '{job}' in flight"),
            ));
        }
        let log = entry.log.clone();
        let n = log.trace_count();
        match (req.train_events, req.segment) {
            (Some(_), Some(_)) => return Err(ApiError::invalid("give either train_events or segment, not both")),
            (Some(t), None) if t == 0 || t > log.event_count() => {
                return Err(ApiError::invalid(format!(
                    "train_events must lie in 1..={}",
                    log.event_count()
                )))
            }
            (None, Some((a, b))) if a >= b || b > n => {
                return Err(ApiError::invalid(format!("segment [{a}, {b}) is not a non-empty range within 0..{n}")))
            }
            _ => {}
        }
        store.next_model += 1;
        let model_id = format!("m{}", store.next_model);
        store.logs.get_mut(&log_id).expect("checked above").training = Some(model_id.clone());
        store.models.insert(
            model_id.clone(),
            ModelEntry {
                log_id: log_id.clone(),
                status: ModelStatus::Training,
                score_runs: 0,
            },
        );
        (log, model_id)
    };

    let job_state = state.clone();
    let job_id = model_id.clone();
    tokio::spawn(async move {
        let result = tokio::task::spawn_blocking(move || train_and_score(&log, &req, &config))
            .await
            .unwrap_or_else(|e| Err(Error::InvalidArgument(format!("training job panicked: {e}"))));
        if let (Ok(ready), Some(dir)) = (&result, &job_state.data_dir) {
            if let Err(e) = ready.model.save(dir.join(format!("{job_id}.json"))) {
                log::warn!("could not persist model {job_id}: {e}");
            }
        }
        let mut store = job_state.lock();
        if let Some(entry) = store.models.get_mut(&job_id) {
            entry.status = match result {
                Ok(ready) => {
                    entry.score_runs += 1;
                    ModelStatus::Ready(Arc::new(ready))
                }
                Err(e) => ModelStatus::Failed(e.to_string()),
            };
            let log_id = entry.log_id.clone();
            if let Some(l) = store.logs.get_mut(&log_id) {
                l.training = None;
            }
        }
        log::info!("training job {job_id} finished");
    });

    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "model_id": model_id, "log_id": log_id, "status": "training" })),
    ))
}

fn train_and_score(log: &EventLog, req: &ModelRequest, config: &StructureConfig) -> crate::Result<ReadyModel> {
    let (train, training_traces) = match req.segment {
        Some((a, b)) => (log.select_traces(a..b), None),
        None => {
            let (train, _) = log.split_train(req.train_events.unwrap_or(DEFAULT_TRAIN_EVENTS))?;
            let n = train.trace_count();
            (train, Some(n))
        }
    };
    let model = train_model(&train, config)?;
    let scores = score_log(&model, log)?;
    let means = trace_means(&scores);
    Ok(ReadyModel {
        model,
        scores,
        means,
        training_traces,
        drift_cache: Mutex::default(),
        segments: RwLock::default(),
    })
}

async fn model_status(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let store = state.lock();
    let entry = store.models.get(&id).ok_or_else(|| ApiError::not_found("model", &id))?;
    let mut out = json!({ "model_id": id, "log_id": entry.log_id, "score_runs": entry.score_runs });
    match &entry.status {
        ModelStatus::Training => out["status"] = json!("training"),
        ModelStatus::Failed(e) => {
            out["status"] = json!("failed");
            out["error"] = json!(e);
        }
        ModelStatus::Ready(m) => {
            out["status"] = json!("ready");
            out["traces"] = json!(m.scores.len());
            out["training_traces"] = json!(m.training_traces);
            out["graph"] = json!(m.model.graph.to_string());
        }
    }
    Ok(Json(out))
}

async fn model_scores(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PlotDocument>> {
    let m = state.ready(&id)?;
    Ok(Json(PlotDocument::trace_scores(&m.scores, m.training_traces, &[])))
}

#[derive(Debug, Deserialize)]
struct DriftParams {
    window: Option<usize>,
    threshold: Option<f64>,
    step: Option<usize>,
    min_separation: Option<usize>,
}

struct DriftRun {
    series: PValueSeries,
    points: Vec<DriftPoint>,
    threshold: f64,
}

fn run_drift(m: &ReadyModel, params: &DriftParams) -> ApiResult<DriftRun> {
    let window = params.window.unwrap_or(400);
    let threshold = params.threshold.unwrap_or(DEFAULT_THRESHOLD);
    let step = params.step.unwrap_or(1);
    if window < 4 || !window.is_multiple_of(2) {
        return Err(ApiError::invalid("window must be even and at least 4"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ApiError::invalid("threshold must lie in (0, 1)"));
    }
    let series = sliding_window_pvalues(&m.means, window, step)?;
    let points = detect_drift_points(&series, threshold, params.min_separation.unwrap_or(window))?;
    Ok(DriftRun {
        series,
        points,
        threshold,
    })
}

async fn model_drift(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<DriftParams>,
) -> ApiResult<Json<Value>> {
    let m = state.ready(&id)?;
    let window = params.window.unwrap_or(400);
    let key = DriftKey {
        window,
        step: params.step.unwrap_or(1),
        threshold_bits: params.threshold.unwrap_or(DEFAULT_THRESHOLD).to_bits(),
        min_separation: params.min_separation.unwrap_or(window),
    };
    if let Some(v) = m.drift_cache.lock().unwrap_or_else(|p| p.into_inner()).get(&key) {
        return Ok(Json((**v).clone()));
    }
    let worker = m.clone();
    let run = tokio::task::spawn_blocking(move || run_drift(&worker, &params))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let plot = PlotDocument::drift(std::slice::from_ref(&run.series), run.threshold, &run.points);
    let value = Arc::new(json!({
        "window": run.series.window_size,
        "step": run.series.step,
        "threshold": run.threshold,
        "points": run.series.points,
        "drift_points": run.points,
        "plot": plot,
    }));
    m.drift_cache
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .insert(key, value.clone());
    Ok(Json((*value).clone()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum SegmentRequest {
    /// Cut at the drift points found with these parameters.
    DriftPoints {
        window: Option<usize>,
        threshold: Option<f64>,
        min_separation: Option<usize>,
    },
    /// Cut before each listed trace index.
    Cuts(Vec<usize>),
    /// Explicit half-open ranges.
    Ranges(Vec<(usize, usize)>),
}

#[derive(Serialize)]
struct SegmentList {
    model_id: String,
    segments: Vec<Segment>,
}

async fn create_segments(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<SegmentRequest>,
) -> ApiResult<Json<SegmentList>> {
    let m = state.ready(&id)?;
    let n = m.scores.len();
    let segments = match req {
        SegmentRequest::DriftPoints {
            window,
            threshold,
            min_separation,
        } => {
            let run = run_drift(
                &m,
                &DriftParams {
                    window,
                    threshold,
                    step: None,
                    min_separation,
                },
            )?;
            segment_log(n, &run.points)?
        }
        SegmentRequest::Cuts(cuts) => segment_at(n, &cuts)?,
        SegmentRequest::Ranges(ranges) => segments_from_ranges(n, &ranges)?,
    };
    *m.segments.write().unwrap_or_else(|p| p.into_inner()) = segments.clone();
    Ok(Json(SegmentList { model_id: id, segments }))
}

async fn list_segments(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SegmentList>> {
    let m = state.ready(&id)?;
    let segments = m.segments.read().unwrap_or_else(|p| p.into_inner()).clone();
    Ok(Json(SegmentList { model_id: id, segments }))
}

fn segment(m: &ReadyModel, sid: usize) -> ApiResult<Segment> {
    m.segments
        .read()
        .unwrap_or_else(|p| p.into_inner())
        .iter()
        .find(|s| s.id == sid)
        .cloned()
        .ok_or_else(|| ApiError::not_found("segment", &sid.to_string()))
}

async fn segment_density(
    State(state): State<AppState>,
    Path((id, sid)): Path<(String, usize)>,
) -> ApiResult<Json<Value>> {
    let m = state.ready(&id)?;
    let seg = segment(&m, sid)?;
    let summary = attribute_density(&m.model, &m.scores[seg.range()], seg.id)?;
    let plot = summary.plot();
    Ok(Json(json!({ "summary": summary, "plot": plot })))
}

#[derive(Debug, Deserialize)]
struct DecomposeParams {
    attribute: Option<String>,
}

async fn segment_decompose(
    State(state): State<AppState>,
    Path((id, sid)): Path<(String, usize)>,
    Query(params): Query<DecomposeParams>,
) -> ApiResult<Json<Value>> {
    let m = state.ready(&id)?;
    let seg = segment(&m, sid)?;
    let attribute = params
        .attribute
        .ok_or_else(|| ApiError::invalid("missing 'attribute' parameter"))?;
    let breakdown = decompose_attribute(&m.model, &m.scores[seg.range()], &attribute)?;
    let plot = breakdown.plot();
    Ok(Json(json!({ "segment_id": sid, "breakdown": breakdown, "plot": plot })))
}

#[derive(Debug, Deserialize)]
struct OutlierParams {
    k: Option<f64>,
    segment: Option<usize>,
}

/// Outliers per segment (all segments, or one); without segments the whole
/// log is treated as a single segment 0.
async fn model_outliers(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<OutlierParams>,
) -> ApiResult<Json<Value>> {
    let m = state.ready(&id)?;
    let k = params.k.unwrap_or(DEFAULT_MAD_K);
    if k.is_nan() || k <= 0.0 {
        return Err(ApiError::invalid("k must be positive"));
    }
    let mut segments = m.segments.read().unwrap_or_else(|p| p.into_inner()).clone();
    if segments.is_empty() {
        segments = segment_at(m.scores.len(), &[])?;
    }
    if let Some(sid) = params.segment {
        segments.retain(|s| s.id == sid);
        if segments.is_empty() {
            return Err(ApiError::not_found("segment", &sid.to_string()));
        }
    }
    let mut outliers = Vec::new();
    for seg in &segments {
        let summary = attribute_density(&m.model, &m.scores[seg.range()], seg.id)?;
        outliers.extend(flag_outliers(&summary, k));
    }
    Ok(Json(json!({ "k": k, "outliers": outliers })))
}
