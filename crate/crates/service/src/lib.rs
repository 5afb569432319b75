//! Stateless HTTP/JSON facade over association, fusion and assessment.
//!
//! Routes:
//! - `GET /healthz`
//! - `GET /api/v1/pairs` lists the dataset pairs loaded at startup
//! - `GET /api/v1/pairs/{id}/{ir|vis}` returns a source image as PNG
//! - `POST /api/v1/associate`, `/api/v1/fuse`, `/api/v1/assess` take a [`Payload`]
//!
//! Anything else falls through to the static UI directory when one is set.
//! Pipeline work runs on the blocking pool, at most `workers` requests at a time.

mod api;
mod error;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use textfuse_core::dataset::{self, AnnotationRecord, RecordFailure};
use textfuse_core::pipeline::PipelineConfig;

pub use api::{
    decode_b64, encode_b64, parse_payload, AssociateResponse, FuseResponse, InlineHeatmap, InlineHeatmaps,
    InlineInstances, PairSummary, PairsResponse, Payload, WeightSummary, MAX_IMAGE_BYTES, MAX_TEXT_CHARS,
};
pub use error::{ApiError, ServiceError};
pub use textfuse_core::assessment::Assessment;

/// Request bodies above this size are refused before parsing.
pub const MAX_BODY_BYTES: usize = 40 * 1024 * 1024;

/// Name of the annotation index inside the dataset root.
pub const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub dataset_root: Option<PathBuf>,
    pub workers: usize,
    pub ui_dir: Option<PathBuf>,
    /// Defaults that payload fields override per request.
    pub pipeline: PipelineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            dataset_root: None,
            workers: 1,
            ui_dir: None,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Read-only state shared by every request.
pub struct AppState {
    records: BTreeMap<String, AnnotationRecord>,
    failures: Vec<RecordFailure>,
    pipeline: PipelineConfig,
    permits: Arc<Semaphore>,
}

impl AppState {
    /// Load the dataset index, if any. Bad records are listed, not fatal.
    pub fn new(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        if cfg.workers == 0 {
            return Err(ServiceError::NoWorkers);
        }
        cfg.pipeline.association.validate()?;
        let (records, failures) = match &cfg.dataset_root {
            Some(root) => dataset::load_annotations_lenient(root.join(INDEX_FILE))?,
            None => (Vec::new(), Vec::new()),
        };
        for f in &failures {
            tracing::warn!(pair = %f.pair_id, error = %f.error, "skipping dataset record");
        }
        Ok(AppState {
            records: records.into_iter().map(|r| (r.id.clone(), r)).collect(),
            failures,
            pipeline: cfg.pipeline.clone(),
            permits: Arc::new(Semaphore::new(cfg.workers)),
        })
    }

    pub fn pair_count(&self) -> usize {
        self.records.len()
    }
}

/// Build the application router.
pub fn router(cfg: &ServiceConfig) -> Result<Router, ServiceError> {
    let state = Arc::new(AppState::new(cfg)?);
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/pairs", get(list_pairs))
        .route("/api/v1/pairs/{id}/{modality}", get(pair_image))
        .route("/api/v1/associate", post(associate))
        .route("/api/v1/fuse", post(fuse))
        .route("/api/v1/assess", post(assess))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    match &cfg.ui_dir {
        Some(dir) if !dir.is_dir() => Err(ServiceError::MissingUi(dir.clone())),
        Some(dir) => Ok(api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true))),
        None => Ok(api),
    }
}

/// Bind and serve until Ctrl-C.
pub async fn serve(cfg: &ServiceConfig, bind: SocketAddr) -> Result<(), ServiceError> {
    let app = router(cfg)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, workers = cfg.workers, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn blocking<T, F>(state: &Arc<AppState>, work: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
{
    let _permit = state
        .permits
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::Internal("worker pool closed".into()))?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || work(&state))
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

async fn healthz() -> &'static str {
    "ok"
}

async fn list_pairs(State(state): State<Arc<AppState>>) -> Json<PairsResponse> {
    Json(api::pairs(&state))
}

async fn pair_image(
    State(state): State<Arc<AppState>>,
    Path((id, modality)): Path<(String, String)>,
) -> Result<impl IntoResponse, ApiError> {
    let png = blocking(&state, move |s| api::pair_image(s, &id, &modality)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

async fn associate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<AssociateResponse>, ApiError> {
    let payload = parse_payload(&body)?;
    blocking(&state, move |s| api::associate(s, payload)).await.map(Json)
}

async fn fuse(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<FuseResponse>, ApiError> {
    let payload = parse_payload(&body)?;
    blocking(&state, move |s| api::fuse(s, payload)).await.map(Json)
}

async fn assess(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Assessment>, ApiError> {
    let payload = parse_payload(&body)?;
    blocking(&state, move |s| api::assess(s, payload)).await.map(Json)
}
