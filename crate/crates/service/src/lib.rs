//! HTTP/JSON front end for the learning and generation pipelines.
//!
//! | method | path               | body                  |
//! |--------|--------------------|-----------------------|
//! | GET    | `/health`          |                       |
//! | POST   | `/v1/learn`        | [`LearnRequest`]      |
//! | POST   | `/v1/generate`     | [`GenerateRequest`]   |
//! | POST   | `/v1/classify`     | [`ClassifyRequest`]   |
//! | POST   | `/v1/validate`     | [`ValidateRequest`]   |
//! | POST   | `/v1/assets/index` | [`AssetsIndexRequest`]|
//! | POST   | `/v1/export`       | [`ExportRequest`]     |
//!
//! Pipelines are synchronous and run on the blocking pool, at most
//! [`ServiceConfig::jobs`] at a time. Errors are `{"error": {kind, stage, message}}`.

mod config;
mod error;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

use motifsmith_core::api::{
    AssetsIndexRequest, AssetsIndexResponse, ClassifyRequest, ClassifyResponse, ExportRequest, ExportResponse,
    GenerateRequest, GenerateResponse, Health, LearnRequest, LearnResponse, ValidateRequest, ValidateResponse,
};
use motifsmith_core::assets::{build_index, AssetIndex};
use motifsmith_core::pipeline::{export_merged, Orchestrator, PipelineError};
use motifsmith_core::program::ProgramLibrary;
use motifsmith_core::validate::{validate_motif_program, CriterionResult};

pub use config::{BackendConfig, ExecutorConfig, ServiceConfig};
pub use error::{ApiError, ServiceError};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    orch: Orchestrator,
    config: ServiceConfig,
    indexes: Mutex<HashMap<PathBuf, Arc<AssetIndex>>>,
    permits: Semaphore,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let orch = config.orchestrator()?;
        Ok(Self::with_orchestrator(config, orch))
    }

    /// Use an already built orchestrator (custom backend or executor).
    pub fn with_orchestrator(config: ServiceConfig, orch: Orchestrator) -> Self {
        let permits = Semaphore::new(config.jobs.max(1));
        AppState {
            inner: Arc::new(Inner {
                orch,
                config,
                indexes: Mutex::new(HashMap::new()),
                permits,
            }),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    fn library(&self, path: Option<PathBuf>) -> Result<ProgramLibrary, ApiError> {
        let path = path.unwrap_or_else(|| self.inner.config.library.clone());
        ProgramLibrary::open(&path).map_err(|e| ApiError::bad_request("library", e.to_string()))
    }

    /// Asset indexes are built once per manifest path and shared.
    fn index(&self, manifest: &Path) -> Result<Arc<AssetIndex>, ApiError> {
        if let Some(idx) = self.inner.indexes.lock().expect("index cache").get(manifest) {
            return Ok(idx.clone());
        }
        let idx = Arc::new(build_index(manifest).map_err(|e| ApiError::bad_request("assets", e.to_string()))?);
        for w in idx.warnings() {
            tracing::warn!(manifest = %manifest.display(), "{w}");
        }
        self.inner
            .indexes
            .lock()
            .expect("index cache")
            .insert(manifest.to_path_buf(), idx.clone());
        Ok(idx)
    }

    /// Run `f` on the blocking pool once a job slot is free.
    async fn run<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(AppState) -> Result<T, ApiError> + Send + 'static,
    {
        let _permit = self
            .inner
            .permits
            .acquire()
            .await
            .map_err(|_| ApiError::internal("service is shutting down"))?;
        let state = self.clone();
        tokio::task::spawn_blocking(move || f(state))
            .await
            .map_err(|e| ApiError::internal(format!("worker task failed: {e}")))?
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/learn", post(learn))
        .route("/v1/generate", post(generate))
        .route("/v1/classify", post(classify))
        .route("/v1/validate", post(validate))
        .route("/v1/assets/index", post(index_assets))
        .route("/v1/export", post(export))
        .with_state(state)
}

/// Serve on `listener` until the task is dropped or aborted.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Bind `addr` (port 0 picks a free port) and serve in the background.
pub async fn spawn(addr: SocketAddr, state: AppState) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = serve(listener, state).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok((local, handle))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        backend: state.inner.orch.backend_name(),
    })
}

async fn learn(
    State(state): State<AppState>,
    payload: Result<Json<LearnRequest>, JsonRejection>,
) -> Result<Json<LearnResponse>, ApiError> {
    let req = body(payload)?;
    state
        .run(move |s| {
            let lib = s.library(req.library)?;
            let description = req.description.unwrap_or_else(|| req.arrangement.description.clone());
            Ok(s.inner.orch.learn(&description, &req.arrangement, &lib)?)
        })
        .await
        .map(Json)
}

async fn generate(
    State(state): State<AppState>,
    payload: Result<Json<GenerateRequest>, JsonRejection>,
) -> Result<Json<GenerateResponse>, ApiError> {
    let req = body(payload)?;
    state
        .run(move |s| {
            let lib = s.library(req.library)?;
            let manifest = req.assets.or_else(|| s.inner.config.assets.clone());
            let index = manifest.as_deref().map(|m| s.index(m)).transpose()?;
            let mut cfg = s.inner.orch.config().clone();
            if let Some(seed) = req.seed {
                cfg.rng_seed = seed;
            }
            if let Some(touch) = req.touch {
                cfg.touch = touch;
            }
            let orch = s.inner.orch.reconfigured(cfg);
            let outcome = orch.generate(&req.description, &lib, index.as_deref())?;
            let merged_obj = req.merged_mesh.then(|| outcome.merged_obj());
            Ok(GenerateResponse { outcome, merged_obj })
        })
        .await
        .map(Json)
}

async fn classify(
    State(state): State<AppState>,
    payload: Result<Json<ClassifyRequest>, JsonRejection>,
) -> Result<Json<ClassifyResponse>, ApiError> {
    let req = body(payload)?;
    state
        .run(move |s| {
            let (motif_type, report) = s.inner.orch.classify_description(&req.description)?;
            Ok(ClassifyResponse { motif_type, report })
        })
        .await
        .map(Json)
}

async fn validate(
    State(state): State<AppState>,
    payload: Result<Json<ValidateRequest>, JsonRejection>,
) -> Result<Json<ValidateResponse>, ApiError> {
    let req = body(payload)?;
    req.arrangement
        .validate()
        .map_err(|e| ApiError::bad_request("invalid_argument", e.to_string()))?;
    state
        .run(move |s| {
            let trace = match (req.trace, req.program) {
                (Some(t), _) => t,
                (None, Some(source)) => {
                    let limits = motifsmith_core::exec::ExecLimits {
                        timeout_s: s.inner.orch.config().exec_timeout_s,
                        max_objects: s.inner.orch.config().max_objects,
                        rng_seed: 0,
                    };
                    match s.inner.orch.executor().execute_program(&source, limits) {
                        Ok(t) => t,
                        Err(e) if e.is_infrastructure() => {
                            return Err(PipelineError::Executor {
                                stage: motifsmith_core::pipeline::Stage::Rewrite,
                                source: e,
                            }
                            .into())
                        }
                        Err(e) => return Err(ApiError::unprocessable("executor", e.to_string())),
                    }
                }
                (None, None) => {
                    return Err(ApiError::bad_request(
                        "invalid_argument",
                        "either `program` or `trace` is required",
                    ))
                }
            };
            let judgment = CriterionResult::hardcode_judgment(req.listing_valid, &req.listing_variables);
            Ok(validate_motif_program(&trace, &req.arrangement, judgment))
        })
        .await
        .map(Json)
}

async fn index_assets(
    State(state): State<AppState>,
    payload: Result<Json<AssetsIndexRequest>, JsonRejection>,
) -> Result<Json<AssetsIndexResponse>, ApiError> {
    let req = body(payload)?;
    state
        .run(move |s| {
            // always rebuild, so an edited manifest is picked up
            s.inner.indexes.lock().expect("index cache").remove(&req.manifest);
            let idx = s.index(&req.manifest)?;
            let mut labels = std::collections::BTreeMap::new();
            for r in idx.records() {
                *labels.entry(r.label.to_lowercase()).or_insert(0) += 1;
            }
            Ok(AssetsIndexResponse {
                count: idx.len(),
                labels,
                warnings: idx.warnings().to_vec(),
            })
        })
        .await
        .map(Json)
}

async fn export(
    State(state): State<AppState>,
    payload: Result<Json<ExportRequest>, JsonRejection>,
) -> Result<Json<ExportResponse>, ApiError> {
    let req = body(payload)?;
    req.arrangement
        .validate()
        .map_err(|e| ApiError::bad_request("invalid_argument", e.to_string()))?;
    state
        .run(move |s| {
            let manifest = req.assets.or_else(|| s.inner.config.assets.clone());
            let index = manifest.as_deref().map(|m| s.index(m)).transpose()?;
            Ok(ExportResponse {
                obj: export_merged(&req.arrangement, index.as_deref()),
            })
        })
        .await
        .map(Json)
}
