//! JSON-over-HTTP front end for smart drill-down sessions.
//!
//! Datasets are registered once and shared; each session owns its drill tree
//! and sample pool and accepts one mutation at a time (others get 409).

pub mod config;
pub mod datasets;
pub mod error;
pub mod sessions;

use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

pub use config::ServiceConfig;
pub use datasets::{DatasetRecord, RegisterRequest, Registry, SourceFormat};
pub use error::{ErrorBody, ServiceError};
pub use sessions::{NodeRef, Sessions, StreamEvent, TreeResponse};

pub struct Inner {
    pub config: ServiceConfig,
    pub datasets: Registry,
    pub sessions: Sessions,
}

pub type AppState = Arc<Inner>;

pub fn state(config: ServiceConfig) -> AppState {
    Arc::new(Inner {
        config,
        datasets: Registry::default(),
        sessions: Sessions::default(),
    })
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", get(list_datasets).post(register_dataset))
        .route("/sessions", post(sessions::create))
        .route("/sessions/{id}", axum::routing::delete(sessions::delete))
        .route("/sessions/{id}/tree", get(sessions::tree))
        .route("/sessions/{id}/expand", post(sessions::expand))
        .route("/sessions/{id}/star", post(sessions::star))
        .route("/sessions/{id}/drilldown", post(sessions::drilldown))
        .route("/sessions/{id}/collapse", post(sessions::collapse))
        .route("/sessions/{id}/config", axum::routing::put(sessions::put_config))
        .route("/sessions/{id}/stats", get(sessions::stats))
        .fallback(|| async {
            ServiceError::NotFound {
                kind: "route",
                id: String::new(),
            }
        })
        .with_state(app)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn list_datasets(State(app): State<AppState>) -> Json<Vec<DatasetRecord>> {
    Json(app.datasets.list())
}

async fn register_dataset(
    State(app): State<AppState>,
    body: Result<Json<RegisterRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let Json(req) = body?;
    let dir = app.config.dataset_dir.clone();
    let (name, (source, options, table)) = tokio::task::spawn_blocking(move || {
        let loaded = datasets::load(&req, &dir)?;
        let name = req
            .name
            .clone()
            .or_else(|| req.path.as_ref().and_then(|p| p.file_stem()).map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "dataset".into());
        Ok::<_, ServiceError>((name, loaded))
    })
    .await
    .map_err(|e| ServiceError::Internal(e.to_string()))??;
    let record = app.datasets.insert(name, source, options, table);
    Ok((StatusCode::CREATED, Json(record)))
}

/// Periodically drops sessions idle past the configured TTL.
pub fn spawn_reaper(app: AppState) -> tokio::task::JoinHandle<()> {
    let ttl = app.config.session_ttl();
    let every = (ttl / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let stale = app.sessions.expire(ttl);
            if !stale.is_empty() {
                let _ = tokio::task::spawn_blocking(move || drop(stale)).await;
            }
        }
    })
}

/// Binds the configured address and serves until the process ends.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    let app = state(config);
    spawn_reaper(Arc::clone(&app));
    axum::serve(listener, router(app)).await
}
