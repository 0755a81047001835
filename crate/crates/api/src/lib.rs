//! HTTP status API.
//!
//! Read endpoints serve live experiments through coordinator snapshots and
//! everything else from the journal directory, so a finished experiment
//! looks the same whether or not its coordinator is still around.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/experiments` | summaries of all experiments |
//! | GET | `/api/experiments/{id}` | detail |
//! | GET | `/api/experiments/{id}/trials?page=N&per_page=M` | trial page, 1-based, default 100 per page |
//! | GET | `/api/experiments/{id}/best` | best trial, 404 before the first success |
//! | GET | `/api/experiments/{id}/series` | incumbent objective per trial |
//! | POST | `/api/experiments/{id}/stop` | graceful stop; 409 unless running |
//!
//! There is no authentication: anyone who can reach the port can stop an
//! experiment.

pub mod dto;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use solvertune_core::journal::{self, ExperimentStatus, ExperimentView};
use solvertune_core::orchestrator::{ExperimentHandle, OrchestratorError};
use thiserror::Error;

pub const DEFAULT_PER_PAGE: usize = 100;
pub const MAX_PER_PAGE: usize = 10_000;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: std::io::Error },
    #[error("unknown experiment `{0}`")]
    NotFound(String),
    #[error("experiment `{0}` has no successful trial yet")]
    NoBest(String),
    #[error("experiment `{0}` is not running")]
    NotRunning(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = match self {
            ApiError::NotFound(_) | ApiError::NoBest(_) => StatusCode::NOT_FOUND,
            ApiError::NotRunning(_) => StatusCode::CONFLICT,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::BindFailure { .. } | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (code, Json(dto::ErrorBody { error: self.to_string() })).into_response()
    }
}

/// Where experiment state comes from: live handles registered by the host
/// process, plus the journal directory for everything else.
pub struct ApiState {
    journal_dir: PathBuf,
    live: RwLock<BTreeMap<String, Arc<ExperimentHandle>>>,
}

impl ApiState {
    pub fn new(journal_dir: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(Self { journal_dir: journal_dir.into(), live: RwLock::new(BTreeMap::new()) })
    }

    pub fn journal_dir(&self) -> &Path {
        &self.journal_dir
    }

    pub fn register(&self, handle: Arc<ExperimentHandle>) {
        self.live.write().expect("registry lock").insert(handle.id().to_string(), handle);
    }

    fn handle(&self, id: &str) -> Option<Arc<ExperimentHandle>> {
        self.live.read().expect("registry lock").get(id).cloned()
    }

    /// Ids with a journal or a live handle, sorted.
    pub fn ids(&self) -> Result<Vec<String>, ApiError> {
        let mut ids = journal::list_ids(&self.journal_dir).map_err(|e| ApiError::Internal(e.to_string()))?;
        ids.extend(self.live.read().expect("registry lock").keys().cloned());
        ids.sort();
        ids.dedup();
        Ok(ids)
    }

    /// Current view of one experiment.
    pub fn view(&self, id: &str) -> Result<ExperimentView, ApiError> {
        if let Some(h) = self.handle(id) {
            return h.status().map_err(|e| ApiError::Internal(e.to_string()));
        }
        if solvertune_core::orchestrator::check_id(id).is_err() {
            return Err(ApiError::NotFound(id.to_string()));
        }
        let path = journal::journal_path(&self.journal_dir, id);
        if !path.exists() {
            return Err(ApiError::NotFound(id.to_string()));
        }
        let mut view = journal::load(&path).map_err(|e| ApiError::Internal(e.to_string()))?.view;
        if view.status == ExperimentStatus::Running && journal::stop_path(&self.journal_dir, id).exists() {
            view.status = ExperimentStatus::Stopping;
        }
        Ok(view)
    }

    /// Graceful stop. Live experiments are signalled directly; journal-only
    /// ones through the stop file their coordinator polls.
    pub fn stop(&self, id: &str) -> Result<(), ApiError> {
        if let Some(h) = self.handle(id) {
            return h.stop().map_err(|e| match e {
                OrchestratorError::NotRunning(_) => ApiError::NotRunning(id.to_string()),
                e => ApiError::Internal(e.to_string()),
            });
        }
        let view = self.view(id)?;
        if view.status != ExperimentStatus::Running {
            return Err(ApiError::NotRunning(id.to_string()));
        }
        std::fs::write(journal::stop_path(&self.journal_dir, id), b"").map_err(|e| ApiError::Internal(e.to_string()))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn list(State(st): State<Arc<ApiState>>) -> Result<Json<dto::ExperimentList>, ApiError> {
    blocking(move || {
        let mut experiments = Vec::new();
        for id in st.ids()? {
            match st.view(&id) {
                Ok(v) => experiments.push(dto::summary(&v)),
                // A journal being created or damaged is skipped, not fatal.
                Err(ApiError::Internal(e)) => eprintln!("skipping {id}: {e}"),
                Err(e) => return Err(e),
            }
        }
        Ok(Json(dto::ExperimentList { experiments }))
    })
    .await
}

async fn detail(State(st): State<Arc<ApiState>>, UrlPath(id): UrlPath<String>) -> Result<Json<dto::ExperimentDetail>, ApiError> {
    blocking(move || Ok(Json(dto::detail(&st.view(&id)?)))).await
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    page: Option<usize>,
    per_page: Option<usize>,
}

async fn trials(
    State(st): State<Arc<ApiState>>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<PageQuery>, QueryRejection>,
) -> Result<Json<dto::TrialPage>, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let page = q.page.unwrap_or(1);
    let per_page = q.per_page.unwrap_or(DEFAULT_PER_PAGE);
    if page == 0 {
        return Err(ApiError::BadRequest("page numbers start at 1".into()));
    }
    if per_page == 0 || per_page > MAX_PER_PAGE {
        return Err(ApiError::BadRequest(format!("per_page must be in 1..={MAX_PER_PAGE}")));
    }
    blocking(move || {
        let v = st.view(&id)?;
        let rows = v.trials.values().skip((page - 1).saturating_mul(per_page)).take(per_page).map(dto::trial_row).collect();
        Ok(Json(dto::TrialPage { page, per_page, total: v.trials.len(), trials: rows }))
    })
    .await
}

async fn best(State(st): State<Arc<ApiState>>, UrlPath(id): UrlPath<String>) -> Result<Json<journal::BestTrial>, ApiError> {
    blocking(move || st.view(&id)?.best.map(Json).ok_or(ApiError::NoBest(id))).await
}

async fn series(State(st): State<Arc<ApiState>>, UrlPath(id): UrlPath<String>) -> Result<Json<dto::Series>, ApiError> {
    blocking(move || Ok(Json(dto::series(&st.view(&id)?)))).await
}

async fn stop(State(st): State<Arc<ApiState>>, UrlPath(id): UrlPath<String>) -> Result<Json<dto::StopAccepted>, ApiError> {
    blocking(move || {
        st.stop(&id)?;
        Ok(Json(dto::StopAccepted { id, status: ExperimentStatus::Stopping.to_string() }))
    })
    .await
}

/// All API routes, plus static dashboard assets at `/` when given.
pub fn router(state: Arc<ApiState>, assets: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/experiments", get(list))
        .route("/api/experiments/{id}", get(detail))
        .route("/api/experiments/{id}/trials", get(trials))
        .route("/api/experiments/{id}/best", get(best))
        .route("/api/experiments/{id}/series", get(series))
        .route("/api/experiments/{id}/stop", post(stop))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, ApiError> {
    tokio::net::TcpListener::bind(addr).await.map_err(|source| ApiError::BindFailure { addr, source })
}

pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
