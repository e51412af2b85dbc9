//! Live drill-down sessions and their HTTP handlers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::{Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use smartdrill::brs::FoundRule;
use smartdrill::session::{NodePath, NodeView, Session, SessionConfig, SessionStats, Source};

use crate::error::{ErrorBody, ServiceError};
use crate::AppState;

pub const NDJSON: &str = "application/x-ndjson";

pub struct SessionSlot {
    pub dataset_id: String,
    session: Mutex<Session>,
    busy: AtomicBool,
    last_used: Mutex<Instant>,
}

impl SessionSlot {
    fn touch(&self) {
        *self.last_used.lock() = Instant::now();
    }

    pub fn idle_for(&self) -> Duration {
        self.last_used.lock().elapsed()
    }

    pub fn is_busy(&self) -> bool {
        self.busy.load(Ordering::Acquire)
    }

    /// Claims the single mutation slot, or fails with 409.
    pub fn claim(self: &Arc<Self>, id: &str) -> Result<Claim, ServiceError> {
        self.busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| ServiceError::Busy(id.into()))?;
        self.touch();
        Ok(Claim(Arc::clone(self)))
    }
}

/// Held while a mutation runs; releases the slot on drop.
pub struct Claim(Arc<SessionSlot>);

impl Drop for Claim {
    fn drop(&mut self) {
        self.0.touch();
        self.0.busy.store(false, Ordering::Release);
    }
}

#[derive(Default)]
pub struct Sessions {
    slots: RwLock<HashMap<String, Arc<SessionSlot>>>,
}

impl Sessions {
    pub fn get(&self, id: &str) -> Result<Arc<SessionSlot>, ServiceError> {
        self.slots.read().get(id).cloned().ok_or_else(|| ServiceError::NotFound {
            kind: "session",
            id: id.into(),
        })
    }

    fn insert(&self, id: String, slot: SessionSlot) {
        self.slots.write().insert(id, Arc::new(slot));
    }

    fn remove(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.slots.write().remove(id)
    }

    pub fn len(&self) -> usize {
        self.slots.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than `ttl`; busy ones are kept.
    pub fn expire(&self, ttl: Duration) -> Vec<Arc<SessionSlot>> {
        let mut slots = self.slots.write();
        let stale: Vec<String> = slots
            .iter()
            .filter(|(_, s)| !s.is_busy() && s.idle_for() > ttl)
            .map(|(id, _)| id.clone())
            .collect();
        stale.iter().filter_map(|id| slots.remove(id)).collect()
    }
}

/// A node addressed by child indices from the root or by rule text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRef {
    Path(NodePath),
    Rule(String),
}

impl Default for NodeRef {
    fn default() -> Self {
        NodeRef::Path(Vec::new())
    }
}

impl NodeRef {
    fn resolve(&self, s: &Session) -> Result<NodePath, ServiceError> {
        match self {
            NodeRef::Path(p) => {
                s.node(p)?;
                Ok(p.clone())
            }
            NodeRef::Rule(text) => Ok(s.path_of(text)?),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub dataset_id: String,
    /// Fields to override on the service defaults.
    pub config: Option<Value>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gesture {
    pub path: NodeRef,
    pub column: Option<String>,
    /// Stream rules as NDJSON while they are found.
    pub stream: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub dataset_id: String,
    pub config: SessionConfig,
    pub tree: NodeView,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeResponse {
    pub tree: NodeView,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigResponse {
    pub config: SessionConfig,
    pub tree: NodeView,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsResponse {
    pub dataset_id: String,
    pub idle_secs: f64,
    pub busy: bool,
    pub config: SessionConfig,
    #[serde(flatten)]
    pub stats: SessionStats,
}

/// One line of a streamed expansion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StreamEvent {
    Rule {
        rule: Vec<String>,
        text: String,
        count: f64,
        weight: f64,
        marginal_value: f64,
    },
    Done(TreeResponse),
    Error(ErrorBody),
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(default)]
pub struct TreeQuery {
    /// Wait for background sampling to finish before answering.
    pub wait: bool,
}

fn overlay(base: &SessionConfig, patch: Option<Value>) -> Result<SessionConfig, ServiceError> {
    let mut merged = serde_json::to_value(base).map_err(|e| ServiceError::Internal(e.to_string()))?;
    match patch {
        None | Some(Value::Null) => {}
        Some(Value::Object(fields)) => {
            for (k, v) in fields {
                merged[k] = v;
            }
        }
        Some(other) => return Err(ServiceError::BadRequest(format!("config must be an object, got {other}"))),
    }
    serde_json::from_value(merged).map_err(|e| ServiceError::BadRequest(format!("config: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

pub async fn create(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let Json(req) = body?;
    let (_, table) = app.datasets.get(&req.dataset_id)?;
    let base = SessionConfig {
        memory: app.config.memory,
        min_ss: app.config.min_ss,
        ..SessionConfig::default()
    };
    let config = overlay(&base, req.config)?;
    let session = blocking(move || Ok(Session::new(table, config)?)).await?;
    let id = uuid::Uuid::new_v4().to_string();
    let created = SessionCreated {
        id: id.clone(),
        dataset_id: req.dataset_id.clone(),
        config: session.config().clone(),
        tree: session.tree(),
    };
    app.sessions.insert(
        id,
        SessionSlot {
            dataset_id: req.dataset_id,
            session: Mutex::new(session),
            busy: AtomicBool::new(false),
            last_used: Mutex::new(Instant::now()),
        },
    );
    Ok((StatusCode::CREATED, Json(created)))
}

pub async fn delete(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ServiceError> {
    let slot = app.sessions.get(&id)?;
    let claim = slot.claim(&id)?;
    let removed = app.sessions.remove(&id);
    drop(claim);
    // joining the background worker may block
    blocking(move || {
        drop(removed);
        Ok(())
    })
    .await?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn tree(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<TreeQuery>,
) -> Result<Json<TreeResponse>, ServiceError> {
    let slot = app.sessions.get(&id)?;
    blocking(move || {
        let mut s = slot.session.lock();
        if q.wait {
            s.wait_prefetch();
        } else {
            s.poll_prefetch();
        }
        Ok(Json(TreeResponse {
            tree: s.tree(),
            source: None,
            elapsed_ms: None,
        }))
    })
    .await
}

pub async fn stats(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<StatsResponse>, ServiceError> {
    let slot = app.sessions.get(&id)?;
    blocking(move || {
        let s = slot.session.lock();
        Ok(Json(StatsResponse {
            dataset_id: slot.dataset_id.clone(),
            idle_secs: slot.idle_for().as_secs_f64(),
            busy: slot.is_busy(),
            config: s.config().clone(),
            stats: s.stats(),
        }))
    })
    .await
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Expand,
    Star,
    Drilldown,
    Collapse,
}

fn wants_stream(headers: &HeaderMap, g: &Gesture) -> bool {
    g.stream
        || headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.contains(NDJSON))
}

fn apply(
    s: &mut Session,
    kind: Kind,
    g: &Gesture,
    emit: impl FnMut(&FoundRule),
) -> Result<TreeResponse, ServiceError> {
    let path = g.path.resolve(s)?;
    let column = || {
        g.column
            .as_deref()
            .ok_or_else(|| ServiceError::BadRequest("missing column".into()))
    };
    let start = Instant::now();
    match kind {
        Kind::Expand => {
            s.expand_with(&path, None, emit)?;
        }
        Kind::Star => {
            s.expand_with(&path, Some(column()?), emit)?;
        }
        Kind::Drilldown => {
            s.emulate_regular_drilldown(&path, column()?)?;
        }
        Kind::Collapse => s.collapse(&path)?,
    }
    Ok(TreeResponse {
        tree: s.tree(),
        source: (kind != Kind::Collapse).then(|| s.last_source()).flatten(),
        elapsed_ms: Some(start.elapsed().as_secs_f64() * 1000.0),
    })
}

async fn mutate(
    app: AppState,
    id: String,
    headers: HeaderMap,
    body: Result<Json<Gesture>, JsonRejection>,
    kind: Kind,
) -> Result<Response, ServiceError> {
    let Json(g) = body?;
    let slot = app.sessions.get(&id)?;
    let claim = slot.claim(&id)?;
    if !(wants_stream(&headers, &g) && matches!(kind, Kind::Expand | Kind::Star)) {
        let out = blocking(move || {
            let _claim = claim;
            let mut s = slot.session.lock();
            apply(&mut s, kind, &g, |_| {})
        })
        .await?;
        return Ok(Json(out).into_response());
    }

    let (tx, rx) = tokio::sync::mpsc::unbounded_channel::<StreamEvent>();
    tokio::task::spawn_blocking(move || {
        let _claim = claim;
        let mut s = slot.session.lock();
        let columns = s.table().columns().to_vec();
        let rules_tx = tx.clone();
        let done = apply(&mut s, kind, &g, |f| {
            let _ = rules_tx.send(StreamEvent::Rule {
                rule: f.rule.labels(&columns).into_iter().map(String::from).collect(),
                text: f.rule.to_text(&columns),
                count: f.count,
                weight: f.weight,
                marginal_value: f.marginal_value,
            });
        });
        let _ = tx.send(match done {
            Ok(t) => StreamEvent::Done(t),
            Err(e) => StreamEvent::Error(e.body()),
        });
    });
    let lines = futures::stream::unfold(rx, |mut rx| async move {
        let ev = rx.recv().await?;
        let mut line = serde_json::to_vec(&ev).expect("events serialize");
        line.push(b'\n');
        Some((Ok::<_, std::convert::Infallible>(Bytes::from(line)), rx))
    });
    Ok(([(header::CONTENT_TYPE, NDJSON)], Body::from_stream(lines)).into_response())
}

pub async fn expand(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<Gesture>, JsonRejection>,
) -> Result<Response, ServiceError> {
    mutate(app, id, headers, body, Kind::Expand).await
}

pub async fn star(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<Gesture>, JsonRejection>,
) -> Result<Response, ServiceError> {
    mutate(app, id, headers, body, Kind::Star).await
}

pub async fn drilldown(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<Gesture>, JsonRejection>,
) -> Result<Response, ServiceError> {
    mutate(app, id, headers, body, Kind::Drilldown).await
}

pub async fn collapse(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<Gesture>, JsonRejection>,
) -> Result<Response, ServiceError> {
    mutate(app, id, headers, body, Kind::Collapse).await
}

pub async fn put_config(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Json<ConfigResponse>, ServiceError> {
    let Json(patch) = body?;
    let slot = app.sessions.get(&id)?;
    let claim = slot.claim(&id)?;
    blocking(move || {
        let _claim = claim;
        let mut s = slot.session.lock();
        let config = overlay(s.config(), Some(patch))?;
        s.set_config(config)?;
        Ok(Json(ConfigResponse {
            config: s.config().clone(),
            tree: s.tree(),
        }))
    })
    .await
}
