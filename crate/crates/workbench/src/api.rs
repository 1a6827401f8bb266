//! HTTP JSON API.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use trajql_core::model::ModelSpec;
use trajql_core::store::Split;

use crate::dataset::DatasetConfig;
use crate::error::{ErrorClass, WorkbenchError};
use crate::jobs::JobManager;
use crate::workspace::{
    CompleteRequest, DistinguishingRequest, EditRequest, EvaluateRequest, MineRequest, PreviewRequest,
};

pub type AppState = Arc<JobManager>;

/// Serialize compactly; the CLI prints the same bytes.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("response serializes")
}

pub struct ApiError(pub WorkbenchError);

impl<E: Into<WorkbenchError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

pub fn status(e: &WorkbenchError) -> StatusCode {
    match e.class() {
        ErrorClass::User => StatusCode::BAD_REQUEST,
        ErrorClass::NotFound => StatusCode::NOT_FOUND,
        ErrorClass::Conflict => StatusCode::CONFLICT,
        ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if status(&self.0) == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        json_response(status(&self.0), &self.0.body())
    }
}

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], to_json(value)).into_response()
}

type ApiResult = Result<Response, ApiError>;

fn ok<T: Serialize>(value: &T) -> ApiResult {
    Ok(json_response(StatusCode::OK, value))
}

/// Run blocking work off the async runtime.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, WorkbenchError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(WorkbenchError::internal)?.map_err(ApiError)
}

/// Request bodies that fail to parse become `invalid_request` errors.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> axum::extract::FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = axum::body::Bytes::from_request(req, state)
            .await
            .map_err(|e| WorkbenchError::Invalid(e.body_text()))?;
        serde_json::from_slice(&bytes)
            .map(Body)
            .map_err(|e| ApiError(WorkbenchError::Invalid(format!("invalid request body: {}", e))))
    }
}

#[derive(Deserialize)]
struct DatasetFilter {
    dataset: Option<String>,
}

#[derive(Deserialize)]
struct ModelFilter {
    model: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IngestBody {
    Path { path: PathBuf },
    Config(DatasetConfig),
}

#[derive(Deserialize)]
struct NewSpec {
    dataset: String,
    spec: ModelSpec,
}

#[derive(Deserialize)]
struct SpecUpdate {
    #[serde(default)]
    version: Option<u64>,
    spec: ModelSpec,
}

#[derive(Deserialize, Default)]
struct Duplicate {
    #[serde(default)]
    name: Option<String>,
}

#[derive(Deserialize)]
struct ExportBody {
    destination: PathBuf,
}

#[derive(Serialize)]
struct ExportResult {
    files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    version: &'static str,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/datasets", get(list_datasets).post(ingest))
        .route("/api/datasets/{name}", get(dataset))
        .route("/api/datasets/{name}/fields", get(fields))
        .route("/api/query/preview", post(preview))
        .route("/api/query/complete", post(complete))
        .route("/api/specs", get(list_specs).post(create_spec))
        .route("/api/specs/{id}", get(spec).put(update_spec).delete(delete_spec))
        .route("/api/specs/{id}/duplicate", post(duplicate_spec))
        .route("/api/specs/{id}/train", post(train_spec))
        .route("/api/jobs", get(list_jobs))
        .route("/api/jobs/{id}", get(job))
        .route("/api/jobs/{id}/cancel", post(cancel_job))
        .route("/api/models", get(list_models))
        .route("/api/models/{id}", get(model))
        .route("/api/models/{id}/metrics", get(metrics))
        .route("/api/models/{id}/export", post(export))
        .route("/api/models/{id}/export/{split}", get(export_split))
        .route("/api/subgroups", get(list_runs))
        .route("/api/subgroups/mine", post(mine))
        .route("/api/subgroups/evaluate", post(evaluate))
        .route("/api/subgroups/edit", post(edit))
        .route("/api/subgroups/distinguishing", post(distinguishing))
        .route("/api/subgroups/{id}", get(run))
        .route("/api/cache/{dataset}/stats", get(cache_stats))
        .fallback(|| async { ApiError(WorkbenchError::not_found("route", "")).into_response() })
        .with_state(state)
}

async fn health() -> ApiResult {
    ok(&Health { status: "ok", version: env!("CARGO_PKG_VERSION") })
}

async fn list_datasets(State(s): State<AppState>) -> ApiResult {
    ok(&s.workspace().datasets())
}

async fn ingest(State(s): State<AppState>, Body(body): Body<IngestBody>) -> ApiResult {
    let summary = blocking(move || {
        let config = match body {
            IngestBody::Path { path } => DatasetConfig::read(&path)?,
            IngestBody::Config(c) => c,
        };
        s.workspace().ingest(config)
    })
    .await?;
    Ok(json_response(StatusCode::CREATED, &summary))
}

async fn dataset(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult {
    ok(&s.workspace().dataset_summary(&name)?)
}

async fn fields(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult {
    ok(&s.workspace().fields(&name)?)
}

async fn preview(State(s): State<AppState>, Body(req): Body<PreviewRequest>) -> ApiResult {
    ok(&blocking(move || s.workspace().preview(&req)).await?)
}

async fn complete(State(s): State<AppState>, Body(req): Body<CompleteRequest>) -> ApiResult {
    ok(&s.workspace().complete(&req)?)
}

async fn list_specs(State(s): State<AppState>, Query(q): Query<DatasetFilter>) -> ApiResult {
    ok(&s.workspace().specs(q.dataset.as_deref()))
}

async fn create_spec(State(s): State<AppState>, Body(req): Body<NewSpec>) -> ApiResult {
    let record = s.workspace().create_spec(&req.dataset, req.spec)?;
    Ok(json_response(StatusCode::CREATED, &record))
}

async fn spec(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(&s.workspace().spec(&id)?)
}

async fn update_spec(State(s): State<AppState>, Path(id): Path<String>, Body(req): Body<SpecUpdate>) -> ApiResult {
    ok(&s.workspace().update_spec(&id, req.version, req.spec)?)
}

async fn delete_spec(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    s.workspace().delete_spec(&id)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn duplicate_spec(State(s): State<AppState>, Path(id): Path<String>, body: axum::body::Bytes) -> ApiResult {
    let req: Duplicate = if body.is_empty() {
        Duplicate::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| WorkbenchError::Invalid(format!("invalid request body: {}", e)))?
    };
    let record = s.workspace().duplicate_spec(&id, req.name)?;
    Ok(json_response(StatusCode::CREATED, &record))
}

async fn train_spec(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let job = blocking(move || s.submit_train_spec(&id)).await?;
    Ok(json_response(StatusCode::ACCEPTED, &job))
}

async fn list_jobs(State(s): State<AppState>) -> ApiResult {
    ok(&s.list())
}

async fn job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(&s.get(&id)?)
}

async fn cancel_job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(&s.cancel(&id)?)
}

async fn list_models(State(s): State<AppState>, Query(q): Query<DatasetFilter>) -> ApiResult {
    ok(&s.workspace().models(q.dataset.as_deref()))
}

async fn model(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(&s.workspace().model(&id)?.summary())
}

async fn metrics(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(&s.workspace().model(&id)?.metrics())
}

async fn export(State(s): State<AppState>, Path(id): Path<String>, Body(req): Body<ExportBody>) -> ApiResult {
    let files = blocking(move || s.workspace().export_model(&id, &req.destination)).await?;
    ok(&ExportResult { files })
}

async fn export_split(State(s): State<AppState>, Path((id, split)): Path<(String, String)>) -> ApiResult {
    let split = Split::ALL
        .into_iter()
        .find(|x| x.name() == split)
        .ok_or_else(|| WorkbenchError::Invalid(format!("unknown split `{}`; use train, val or test", split)))?;
    let bytes = blocking(move || s.workspace().export_split(&id, split)).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], bytes).into_response())
}

async fn list_runs(State(s): State<AppState>, Query(q): Query<ModelFilter>) -> ApiResult {
    let runs: Vec<_> = s.workspace().subgroup_runs(q.model.as_deref());
    ok(&runs)
}

async fn run(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(&s.workspace().subgroup_run(&id)?)
}

async fn mine(State(s): State<AppState>, Body(req): Body<MineRequest>) -> ApiResult {
    let job = s.submit_mine(req)?;
    Ok(json_response(StatusCode::ACCEPTED, &job))
}

async fn evaluate(State(s): State<AppState>, Body(req): Body<EvaluateRequest>) -> ApiResult {
    ok(&blocking(move || s.workspace().evaluate_rule(&req)).await?)
}

async fn edit(State(s): State<AppState>, Body(req): Body<EditRequest>) -> ApiResult {
    ok(&blocking(move || s.workspace().edit_rule(&req)).await?)
}

async fn distinguishing(State(s): State<AppState>, Body(req): Body<DistinguishingRequest>) -> ApiResult {
    ok(&blocking(move || s.workspace().distinguishing(&req)).await?)
}

async fn cache_stats(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult {
    ok(&s.workspace().cache_stats(&name)?)
}

/// A service running on a background runtime.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub jobs: AppState,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Stop accepting requests, finish in-flight ones and stop the workers.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        self.jobs.shutdown();
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Bind `addr` and serve on a new thread. Port 0 picks a free port.
pub fn spawn(jobs: AppState, addr: SocketAddr) -> std::io::Result<RunningServer> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(jobs.clone());
    let thread = std::thread::Builder::new().name("http".into()).spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            let shutdown = async {
                let _ = rx.await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                log::error!("server error: {}", e);
            }
        });
    })?;
    Ok(RunningServer { addr, jobs, stop: Some(tx), thread: Some(thread) })
}

/// Serve in the foreground until Ctrl-C.
pub async fn serve(jobs: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(jobs))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
