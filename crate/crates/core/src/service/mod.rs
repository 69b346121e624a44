//! Embedded HTTP/JSON service.
//!
//! Datasets and runs live in a [`Store`] persisted under a state
//! directory. Solves run on the blocking pool behind a status field;
//! `?wait=true` on a solve request blocks until the run is final.

pub mod schema;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::{Any, CorsLayer};

pub use schema::schema;
pub use store::{
    DatasetEntry, DatasetStatus, DatasetSummary, ErrorBody, RunKind, RunRecord, RunResult, RunStatus, RunSummary, Store,
};

use crate::error::Error;
use crate::ingest::{poi_to_cell, DensityNorm, PoiCell};
use crate::pipeline::{
    check_circular, check_discrete, grid, ingest, solve_circular, solve_discrete, CircularRequest, Dataset,
    DiscreteRequest, IngestOptions,
};
use crate::synth::SynthConfig;

/// Environment variable overriding the default state directory.
pub const STATE_DIR_ENV: &str = "DGEOFENCE_STATE_DIR";

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

pub fn default_state_dir() -> PathBuf {
    std::env::var_os(STATE_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("dgeofence-state"))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into() } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_argument", message)
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id:?}"))
    }
}

/// HTTP status for a machine-readable error code.
pub fn status_for_code(code: &str) -> StatusCode {
    match code {
        "infeasible" | "fixed_violation" => StatusCode::UNPROCESSABLE_ENTITY,
        "io" | "no_finite_candidate" | "internal" | "interrupted" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let body = ErrorBody::from(&e);
        Self { status: status_for_code(&body.code), body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.body }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
struct AppState {
    store: Arc<Store>,
}

pub fn router(store: Arc<Store>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/api/schema", get(get_schema))
        .route("/api/datasets", post(create_dataset).get(list_datasets))
        .route("/api/datasets/:id", get(get_dataset))
        .route("/api/datasets/:id/grid", get(get_grid))
        .route("/api/solve", post(solve))
        .route("/api/solve/circular", post(solve_circular_run))
        .route("/api/runs", get(list_runs))
        .route("/api/runs/:id", get(get_run).delete(delete_run))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(cors)
        .with_state(AppState { store })
}

/// Serves the API on `addr` until interrupted.
pub async fn serve(addr: SocketAddr, state_dir: PathBuf) -> crate::Result<()> {
    let store = Arc::new(Store::open(state_dir)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn get_schema() -> Json<Value> {
    Json(schema())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct DatasetQuery {
    wait: Option<bool>,
    header: Option<bool>,
    iso_time: bool,
    latlon: bool,
    min_points: Option<usize>,
    /// `x,y`
    region_center: Option<String>,
    region_radius: Option<f64>,
}

impl DatasetQuery {
    fn ingest_options(&self) -> ApiResult<IngestOptions> {
        let region_center = self
            .region_center
            .as_deref()
            .map(|s| {
                let parts: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(
                    |_| ApiError::bad_request(format!("region_center must be \"x,y\", got {s:?}")),
                )?;
                match parts[..] {
                    [x, y] => Ok([x, y]),
                    _ => Err(ApiError::bad_request(format!("region_center must be \"x,y\", got {s:?}"))),
                }
            })
            .transpose()?;
        Ok(IngestOptions {
            has_header: self.header,
            iso_time: self.iso_time,
            latlon: self.latlon,
            region_center,
            region_radius: self.region_radius,
            min_points: self.min_points,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetBody {
    preset: Option<String>,
    synth: Option<SynthConfig>,
    csv: Option<String>,
    ingest: Option<IngestOptions>,
}

enum DatasetJob {
    Synth(SynthConfig),
    Csv(Bytes, IngestOptions),
    CsvText(String, IngestOptions),
}

impl DatasetJob {
    fn source(&self) -> &'static str {
        match self {
            DatasetJob::Synth(_) => "synth",
            _ => "csv",
        }
    }

    fn run(self) -> crate::Result<Dataset> {
        match self {
            DatasetJob::Synth(cfg) => Dataset::from_synth(&cfg),
            DatasetJob::Csv(bytes, opts) => Ok(Dataset { data: ingest(&bytes[..], &opts)?, pois: Vec::new() }),
            DatasetJob::CsvText(text, opts) => Ok(Dataset { data: ingest(text.as_bytes(), &opts)?, pois: Vec::new() }),
        }
    }
}

fn is_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"))
}

fn dataset_job(headers: &HeaderMap, query: &DatasetQuery, body: Bytes) -> ApiResult<DatasetJob> {
    if !is_json(headers) {
        return Ok(DatasetJob::Csv(body, query.ingest_options()?));
    }
    let parsed: DatasetBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid dataset body: {e}")))?;
    let ingest_opts = parsed.ingest.unwrap_or_default();
    match (parsed.preset, parsed.synth, parsed.csv) {
        (Some(name), None, None) => Ok(DatasetJob::Synth(SynthConfig::preset(&name)?)),
        (None, Some(cfg), None) => {
            cfg.validate()?;
            Ok(DatasetJob::Synth(cfg))
        }
        (None, None, Some(text)) => Ok(DatasetJob::CsvText(text, ingest_opts)),
        _ => Err(ApiError::bad_request("give exactly one of preset, synth or csv")),
    }
}

fn ready_summary(id: String, source: &str, created_at: String, ds: &Dataset) -> crate::Result<DatasetSummary> {
    Ok(DatasetSummary {
        dataset_id: id,
        status: DatasetStatus::Ready,
        source: source.into(),
        users: Some(ds.data.len()),
        points: Some(ds.data.point_count()),
        bbox: Some(ds.normalized()?.bbox),
        pois: ds.pois.clone(),
        error: None,
        created_at,
    })
}

/// Builds the dataset on the blocking pool and records the outcome.
async fn build_dataset(store: Arc<Store>, pending: DatasetSummary, job: DatasetJob) -> DatasetSummary {
    let template = pending.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let ds = job.run()?;
        let summary = ready_summary(template.dataset_id, &template.source, template.created_at, &ds)?;
        Ok::<_, Error>((summary, ds))
    })
    .await;
    let error = match outcome {
        Ok(Ok((summary, ds))) => match store.put_dataset(summary.clone(), Some(ds)) {
            Ok(()) => return summary,
            Err(e) => ErrorBody::from(&e),
        },
        Ok(Err(e)) => ErrorBody::from(&e),
        Err(join) => ErrorBody { code: "internal".into(), message: join.to_string() },
    };
    let failed = DatasetSummary { status: DatasetStatus::Failed, error: Some(error), ..pending };
    let _ = store.put_dataset(failed.clone(), None);
    failed
}

async fn create_dataset(
    State(state): State<AppState>,
    Query(query): Query<DatasetQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let job = dataset_job(&headers, &query, body)?;
    let pending = DatasetSummary {
        dataset_id: uuid::Uuid::new_v4().simple().to_string(),
        status: DatasetStatus::Processing,
        source: job.source().into(),
        users: None,
        points: None,
        bbox: None,
        pois: Vec::new(),
        error: None,
        created_at: now(),
    };
    state.store.put_dataset_pending(pending.clone());
    let task = tokio::spawn(build_dataset(state.store.clone(), pending.clone(), job));
    if query.wait == Some(false) {
        return Ok((StatusCode::ACCEPTED, Json(pending)).into_response());
    }
    let summary = task.await.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    match &summary.error {
        Some(err) => Err(ApiError { status: status_for_code(&err.code), body: err.clone() }),
        None => Ok((StatusCode::CREATED, Json(summary)).into_response()),
    }
}

async fn list_datasets(State(state): State<AppState>) -> Json<Vec<DatasetSummary>> {
    Json(state.store.datasets())
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DatasetSummary>> {
    state.store.dataset(&id).map(|e| Json(e.summary)).ok_or_else(|| ApiError::not_found("dataset", &id))
}

/// A ready dataset, or 404 / 409 / the stored build error.
fn ready_dataset(store: &Store, id: &str) -> ApiResult<Arc<Dataset>> {
    let entry = store.dataset(id).ok_or_else(|| ApiError::not_found("dataset", id))?;
    match (entry.summary.status, entry.dataset) {
        (DatasetStatus::Ready, Some(ds)) => Ok(ds),
        (DatasetStatus::Processing, _) => {
            Err(ApiError::new(StatusCode::CONFLICT, "processing", format!("dataset {id:?} is still processing")))
        }
        _ => Err(ApiError::new(StatusCode::CONFLICT, "dataset_failed", format!("dataset {id:?} failed to build"))),
    }
}

#[derive(Debug, Deserialize)]
struct GridQuery {
    d: u32,
    #[serde(default)]
    norm: DensityNorm,
}

#[derive(Debug, Serialize)]
struct GridResponse {
    dataset_id: String,
    d: u32,
    side: usize,
    bbox: crate::ingest::BBox,
    /// Row-major, row 0 at minimum y.
    values: Vec<f64>,
    pois: Vec<PoiCell>,
}

async fn get_grid(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<GridQuery>,
) -> ApiResult<Json<GridResponse>> {
    let ds = ready_dataset(&state.store, &id)?;
    let (d, norm) = (q.d, q.norm);
    let matrix = tokio::task::spawn_blocking(move || {
        let m = grid(&ds.data, d, norm)?;
        let pois = ds.pois.iter().filter_map(|p| poi_to_cell((p[0], p[1]), &m.spec.bbox, d).ok()).collect();
        Ok::<_, Error>((m, pois))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let (m, pois) = matrix;
    Ok(Json(GridResponse { dataset_id: id, d, side: m.side(), bbox: m.spec.bbox, values: m.values().to_vec(), pois }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SolveQuery {
    wait: bool,
}

enum SolveJob {
    Discrete(Arc<Dataset>, DiscreteRequest),
    Circular(Arc<Dataset>, CircularRequest),
}

impl SolveJob {
    fn run(self) -> crate::Result<(RunResult, crate::eval::CoverageReport)> {
        match self {
            SolveJob::Discrete(ds, req) => {
                let out = solve_discrete(&ds.data, &req)?;
                Ok((RunResult::Discrete(out.result.to_doc()), out.coverage))
            }
            SolveJob::Circular(ds, req) => {
                let out = solve_circular(&ds.data, &req)?;
                Ok((RunResult::Circular(out.doc), out.report))
            }
        }
    }
}

/// Splits `dataset_id` off a request body and insists on an explicit seed.
fn split_body(body: &Bytes) -> ApiResult<(String, Value)> {
    let mut value: Value =
        serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))?;
    let obj = value.as_object_mut().ok_or_else(|| ApiError::bad_request("request body must be a JSON object"))?;
    let dataset_id = match obj.remove("dataset_id") {
        Some(Value::String(s)) => s,
        _ => return Err(ApiError::bad_request("dataset_id (string) is required")),
    };
    if !obj.get("seed").is_some_and(Value::is_u64) {
        return Err(ApiError::bad_request("an explicit non-negative integer seed is required"));
    }
    Ok((dataset_id, value))
}

async fn start_run(store: Arc<Store>, kind: RunKind, dataset_id: String, request: Value, job: SolveJob, wait: bool) -> ApiResult<Response> {
    let run_id = uuid::Uuid::new_v4().simple().to_string();
    let record = RunRecord {
        run_id: run_id.clone(),
        kind,
        status: RunStatus::Queued,
        dataset_id,
        request,
        result: None,
        metrics: None,
        error: None,
        created_at: now(),
        elapsed_s: None,
    };
    store.put_run(record.clone())?;
    let task = tokio::spawn(execute(store.clone(), run_id.clone(), job));
    if !wait {
        return Ok((StatusCode::ACCEPTED, Json(record)).into_response());
    }
    task.await.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let done = store.run(&run_id).ok_or_else(|| ApiError::not_found("run", &run_id))?;
    let status = match &done.error {
        Some(err) => status_for_code(&err.code),
        None => StatusCode::OK,
    };
    Ok((status, Json(done)).into_response())
}

async fn execute(store: Arc<Store>, run_id: String, job: SolveJob) {
    if !matches!(store.update_run(&run_id, |r| r.status = RunStatus::Running), Ok(true)) {
        return;
    }
    let started = Instant::now();
    let outcome = tokio::task::spawn_blocking(move || job.run()).await;
    let elapsed = started.elapsed().as_secs_f64();
    let _ = store.update_run(&run_id, |r| {
        r.elapsed_s = Some(elapsed);
        match outcome {
            Ok(Ok((result, metrics))) => {
                r.status = RunStatus::Done;
                r.result = Some(result);
                r.metrics = Some(metrics);
            }
            Ok(Err(e)) => {
                r.status = RunStatus::Failed;
                r.error = Some(ErrorBody::from(&e));
            }
            Err(join) => {
                r.status = RunStatus::Failed;
                r.error = Some(ErrorBody { code: "internal".into(), message: join.to_string() });
            }
        }
    });
}

async fn solve(State(state): State<AppState>, Query(q): Query<SolveQuery>, body: Bytes) -> ApiResult<Response> {
    let (dataset_id, value) = split_body(&body)?;
    let ds = ready_dataset(&state.store, &dataset_id)?;
    let req: DiscreteRequest = serde_json::from_value(value.clone())
        .map_err(|e| ApiError::bad_request(format!("invalid solve request: {e}")))?;
    check_discrete(&ds.data, &req)?;
    start_run(state.store.clone(), RunKind::Discrete, dataset_id, value, SolveJob::Discrete(ds, req), q.wait).await
}

async fn solve_circular_run(State(state): State<AppState>, Query(q): Query<SolveQuery>, body: Bytes) -> ApiResult<Response> {
    let (dataset_id, mut value) = split_body(&body)?;
    let ds = ready_dataset(&state.store, &dataset_id)?;
    let seed = value.as_object_mut().and_then(|o| o.remove("seed")).and_then(|s| s.as_u64()).unwrap_or_default();
    let mut req: CircularRequest = serde_json::from_value(value.clone())
        .map_err(|e| ApiError::bad_request(format!("invalid circular request: {e}")))?;
    req.params.seed = seed;
    check_circular(&ds.data, &req)?;
    let request = serde_json::to_value(&req).map_err(Error::from)?;
    start_run(state.store.clone(), RunKind::Circular, dataset_id, request, SolveJob::Circular(ds, req), q.wait).await
}

async fn list_runs(State(state): State<AppState>) -> Json<Vec<RunSummary>> {
    Json(state.store.runs().iter().map(RunSummary::from).collect())
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RunRecord>> {
    state.store.run(&id).map(Json).ok_or_else(|| ApiError::not_found("run", &id))
}

async fn delete_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    if state.store.delete_run(&id)? {
        Ok(Json(serde_json::json!({ "deleted": id })))
    } else {
        Err(ApiError::not_found("run", &id))
    }
}
