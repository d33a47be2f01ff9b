//! HTTP front end for prediction, geometry export and asynchronous design
//! optimization over one immutable surrogate model.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use tonewood::geometry::{Families, GeometryExport, PlateParams, ReferencePlate, PARAM_DIM};
use tonewood::optimizer::{self, LossSpec, NelderMeadOptions, OptimizationRun, TracePoint, MAX_CHANGE};
use tonewood::surrogate::{FitReport, SurrogateModel, R2_THRESHOLD};

pub const DEFAULT_WORKERS: usize = 2;
pub const DEFAULT_JOB_CAPACITY: usize = 64;
pub const DEFAULT_BOUNDARY_DENSITY: usize = 256;
pub const DEFAULT_THICKNESS_GRID: usize = 32;
const MAX_BOUNDARY_DENSITY: usize = 4096;
const MAX_THICKNESS_GRID: usize = 256;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub workers: usize,
    pub job_capacity: usize,
    pub options: NelderMeadOptions,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { workers: DEFAULT_WORKERS, job_capacity: DEFAULT_JOB_CAPACITY, options: NelderMeadOptions::default() }
    }
}

/// Error response body: `{"error": kind, "message": text}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
    #[serde(skip)]
    status: Option<StatusCode>,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self { error: error.into(), message: message.into(), status: Some(status) }
    }

    fn from_core(err: tonewood::Error) -> Self {
        let status = match &err {
            e if e.is_geometry() => StatusCode::UNPROCESSABLE_ENTITY,
            tonewood::Error::InvalidParams(_) | tonewood::Error::PerturbationInfeasible { .. } => {
                StatusCode::BAD_REQUEST
            }
            tonewood::Error::GateFailed { .. } | tonewood::Error::NotTrained => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, err.kind(), err.to_string())
    }

    fn no_model() -> Self {
        Self::new(StatusCode::CONFLICT, "NoModel", "no surrogate model is loaded")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status.unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Parses a JSON body, reporting the failing field path on error.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::new(StatusCode::BAD_REQUEST, "InvalidJson", format!("{path}: {}", e.inner()))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobResult {
    pub run: OptimizationRun,
    pub f52: f64,
    pub boundary: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobView {
    pub id: u64,
    pub status: JobStatus,
    /// Total trace length; `trace` holds the entries from `since` on.
    pub trace_len: usize,
    pub since: usize,
    pub trace: Vec<TracePoint>,
    pub result: Option<JobResult>,
    pub error: Option<String>,
}

#[derive(Debug)]
struct Job {
    status: JobStatus,
    trace: Vec<TracePoint>,
    result: Option<JobResult>,
    error: Option<String>,
}

impl Job {
    fn finished(&self) -> bool {
        matches!(self.status, JobStatus::Done | JobStatus::Failed)
    }
}

/// Bounded job table. When full, the least recently inserted finished job
/// is evicted; if every job is still in flight the insert is refused.
struct Registry {
    next_id: u64,
    capacity: usize,
    order: VecDeque<u64>,
    jobs: HashMap<u64, Arc<Mutex<Job>>>,
}

impl Registry {
    fn insert(&mut self) -> Option<(u64, Arc<Mutex<Job>>)> {
        if self.jobs.len() >= self.capacity {
            let victim = self.order.iter().position(|id| self.jobs[id].lock().unwrap().finished())?;
            let id = self.order.remove(victim).unwrap();
            self.jobs.remove(&id);
        }
        self.next_id += 1;
        let id = self.next_id;
        let job = Arc::new(Mutex::new(Job { status: JobStatus::Queued, trace: Vec::new(), result: None, error: None }));
        self.order.push_back(id);
        self.jobs.insert(id, job.clone());
        Some((id, job))
    }
}

struct Inner {
    model: Option<Arc<SurrogateModel>>,
    reference: ReferencePlate,
    options: NelderMeadOptions,
    pool: Arc<Semaphore>,
    registry: Mutex<Registry>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(model: Option<SurrogateModel>, reference: ReferencePlate, config: ServiceConfig) -> Self {
        Self(Arc::new(Inner {
            model: model.map(Arc::new),
            reference,
            options: config.options,
            pool: Arc::new(Semaphore::new(config.workers.max(1))),
            registry: Mutex::new(Registry {
                next_id: 0,
                capacity: config.job_capacity.max(1),
                order: VecDeque::new(),
                jobs: HashMap::new(),
            }),
        }))
    }

    fn model(&self) -> Result<Arc<SurrogateModel>, ApiError> {
        self.0.model.clone().ok_or_else(ApiError::no_model)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/model", get(model_info))
        .route("/predict", post(predict))
        .route("/geometry", get(geometry_reference).post(geometry))
        .route("/optimize", post(optimize))
        .route("/jobs/{id}", get(job))
        .with_state(state)
}

/// Serves `router(state)` on `addr` until the process ends.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health { status: "ok".into(), model_loaded: state.0.model.is_some() })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub inputs: Vec<usize>,
    pub hidden: usize,
    pub fit_report: FitReport,
    pub dataset_fingerprint: String,
    pub gate_passed: bool,
    pub reference: PlateParams,
    /// Slider bounds: ±20% around the reference vector.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

async fn model_info(State(state): State<AppState>) -> ApiResult<ModelInfo> {
    let model = state.model()?;
    let reference = state.0.reference.params();
    let v = reference.to_vector();
    Ok(Json(ModelInfo {
        inputs: model.inputs.clone(),
        hidden: model.network.hidden(),
        fit_report: model.fit_report.clone(),
        dataset_fingerprint: model.dataset_fingerprint.clone(),
        gate_passed: model.gate(R2_THRESHOLD).is_ok(),
        lower: v.iter().map(|x| (1.0 - MAX_CHANGE) * x).collect(),
        upper: v.iter().map(|x| (1.0 + MAX_CHANGE) * x).collect(),
        reference,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Prediction {
    pub freqs_hz: Vec<f64>,
    pub f52: f64,
    pub in_training_box: bool,
}

async fn predict(State(state): State<AppState>, body: Bytes) -> ApiResult<Prediction> {
    let model = state.model()?;
    let params: PlateParams = parse_body(&body)?;
    params.validate().map_err(ApiError::from_core)?;
    let freqs_hz = model.predict(&params);
    Ok(Json(Prediction { f52: freqs_hz[4] / freqs_hz[1], in_training_box: model.in_training_box(&params), freqs_hz }))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct GeometryRequest {
    #[serde(default)]
    pub params: Option<PlateParams>,
    /// Boundary samples; default 256.
    #[serde(default)]
    pub density: Option<usize>,
    /// Thickness raster size per side; default 32.
    #[serde(default)]
    pub grid: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct GeometryQuery {
    density: Option<usize>,
    grid: Option<usize>,
}

fn export(state: &AppState, req: GeometryRequest) -> Result<GeometryExport, ApiError> {
    let density = req.density.unwrap_or(DEFAULT_BOUNDARY_DENSITY);
    let grid = req.grid.unwrap_or(DEFAULT_THICKNESS_GRID);
    if !(8..=MAX_BOUNDARY_DENSITY).contains(&density) || !(2..=MAX_THICKNESS_GRID).contains(&grid) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "InvalidParams",
            format!("density must lie in 8..={MAX_BOUNDARY_DENSITY} and grid in 2..={MAX_THICKNESS_GRID}"),
        ));
    }
    let params = req.params.unwrap_or_else(|| state.0.reference.params());
    params.validate().map_err(ApiError::from_core)?;
    let geometry = state.0.reference.realize_with_density(&params, density).map_err(ApiError::from_core)?;
    Ok(geometry.export(grid))
}

async fn geometry_reference(
    State(state): State<AppState>,
    Query(q): Query<GeometryQuery>,
) -> ApiResult<GeometryExport> {
    export(&state, GeometryRequest { params: None, density: q.density, grid: q.grid }).map(Json)
}

async fn geometry(State(state): State<AppState>, body: Bytes) -> ApiResult<GeometryExport> {
    export(&state, parse_body(&body)?).map(Json)
}

/// Free variables as explicit indices or a family list such as
/// `"outline+thickness"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FreeVars {
    Indices(Vec<usize>),
    Families(String),
}

impl FreeVars {
    pub fn resolve(&self) -> tonewood::Result<Vec<usize>> {
        let vars = match self {
            FreeVars::Indices(v) => v.clone(),
            FreeVars::Families(s) => Families::parse(s)?.indices(),
        };
        let mut sorted = vars.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if vars.is_empty() || sorted.len() != vars.len() || vars.iter().any(|&i| i >= PARAM_DIM) {
            return Err(tonewood::Error::InvalidParams(format!(
                "free variables must be distinct indices below {PARAM_DIM}"
            )));
        }
        Ok(vars)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeRequest {
    pub spec: LossSpec,
    pub free: FreeVars,
    /// Defaults to the reference design.
    #[serde(default)]
    pub start: Option<PlateParams>,
    /// Recorded with the job; the optimizer itself is deterministic.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobCreated {
    pub job_id: u64,
}

async fn optimize(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    let model = state.model()?;
    let req: OptimizeRequest = parse_body(&body)?;
    req.spec.validate().map_err(ApiError::from_core)?;
    let free = req.free.resolve().map_err(ApiError::from_core)?;
    let start = req.start.unwrap_or_else(|| state.0.reference.params());
    start.validate().map_err(ApiError::from_core)?;
    model.gate(R2_THRESHOLD).map_err(ApiError::from_core)?;

    let (id, job) =
        state.0.registry.lock().unwrap().insert().ok_or_else(|| {
            ApiError::new(StatusCode::TOO_MANY_REQUESTS, "RegistryFull", "all job slots are in flight")
        })?;

    let pool = state.0.pool.clone();
    let options = state.0.options.clone();
    let reference = state.0.reference.clone();
    tokio::spawn(async move {
        let Ok(_permit) = pool.acquire_owned().await else { return };
        job.lock().unwrap().status = JobStatus::Running;
        let worker = job.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            let run = optimizer::optimize_design(&model, &req.spec, &start, &free, &options, &mut |p| {
                worker.lock().unwrap().trace.push(*p)
            })?;
            let boundary = reference.realize(&run.best)?.boundary;
            let f52 = run.predicted_hz[4] / run.predicted_hz[1];
            Ok::<_, tonewood::Error>(JobResult { run, f52, boundary })
        })
        .await;
        let mut job = job.lock().unwrap();
        match outcome {
            Ok(Ok(result)) => {
                job.result = Some(result);
                job.status = JobStatus::Done;
            }
            Ok(Err(e)) => {
                job.error = Some(format!("{}: {e}", e.kind()));
                job.status = JobStatus::Failed;
            }
            Err(e) => {
                job.error = Some(format!("worker panicked: {e}"));
                job.status = JobStatus::Failed;
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id: id })))
}

#[derive(Debug, Default, Deserialize)]
struct JobQuery {
    since: Option<usize>,
}

async fn job(State(state): State<AppState>, Path(id): Path<u64>, Query(q): Query<JobQuery>) -> ApiResult<JobView> {
    let job = state
        .0
        .registry
        .lock()
        .unwrap()
        .jobs
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownJob", format!("no job {id}")))?;
    let job = job.lock().unwrap();
    let since = q.since.unwrap_or(0).min(job.trace.len());
    Ok(Json(JobView {
        id,
        status: job.status,
        trace_len: job.trace.len(),
        since,
        trace: job.trace[since..].to_vec(),
        result: job.result.clone(),
        error: job.error.clone(),
    }))
}
