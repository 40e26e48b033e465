//! Event collector: decodes posted events, checks them against their route,
//! and appends them to an [`EventStore`].

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use browselog_core::event::{decode, EventRecord, Family, Millis};
use browselog_core::store::{EventStore, FileBackend, StoreError};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

pub mod registry;

pub use registry::{IdKind, IdRegistry, ID_LIMIT};

/// Header carrying the optional deployment token.
pub const TOKEN_HEADER: &str = "x-browselog-token";

#[derive(Debug, Error)]
pub enum CollectorError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed registry line")]
    MalformedRegistry { path: PathBuf, line: usize },
    #[error("unknown id kind `{0}`")]
    UnknownIdKind(String),
}

/// Why a post was refused. Only the status code goes back to the client.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("no such route")]
    UnknownRoute,
    #[error("missing or wrong token")]
    Forbidden,
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("event of family {event:?} posted to the {route:?} route")]
    RouteFamilyMismatch { route: Family, event: Family },
    #[error("storage failure: {0}")]
    Storage(String),
}

impl Rejection {
    pub fn status(&self) -> StatusCode {
        match self {
            Rejection::UnknownRoute => StatusCode::NOT_FOUND,
            Rejection::Forbidden => StatusCode::FORBIDDEN,
            Rejection::Malformed(_) => StatusCode::BAD_REQUEST,
            Rejection::RouteFamilyMismatch { .. } => StatusCode::CONFLICT,
            Rejection::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollectorConfig {
    /// When set, every request must carry it in [`TOKEN_HEADER`].
    pub token: Option<String>,
    /// fsync each appended line.
    pub fsync: bool,
}

pub struct Collector {
    store: Arc<EventStore>,
    ids: IdRegistry,
    token: Option<String>,
    rng: Mutex<StdRng>,
}

impl std::fmt::Debug for Collector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Collector").field("events", &self.store.len()).field("ids", &self.ids).finish()
    }
}

fn now_ms() -> Millis {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as Millis)
}

impl Collector {
    pub fn new(store: Arc<EventStore>, ids: IdRegistry, config: CollectorConfig) -> Collector {
        Collector { store, ids, token: config.token, rng: Mutex::new(StdRng::from_os_rng()) }
    }

    pub fn in_memory(config: CollectorConfig) -> Collector {
        Collector::new(Arc::new(EventStore::in_memory()), IdRegistry::in_memory(), config)
    }

    /// Event logs and the id registry both live under `dir`.
    pub fn open_dir(dir: &Path, config: CollectorConfig) -> Result<Collector, CollectorError> {
        let backend = FileBackend::open_with(dir, config.fsync)?;
        let store = EventStore::with_backend(Box::new(backend))?;
        let ids = IdRegistry::open(registry::registry_path(dir))?;
        Ok(Collector::new(Arc::new(store), ids, config))
    }

    pub fn store(&self) -> &Arc<EventStore> {
        &self.store
    }

    pub fn ids(&self) -> &IdRegistry {
        &self.ids
    }

    fn check_token(&self, token: Option<&str>) -> Result<(), Rejection> {
        match &self.token {
            Some(want) if token != Some(want.as_str()) => Err(Rejection::Forbidden),
            _ => Ok(()),
        }
    }

    /// Validates and appends one posted event.
    pub fn ingest(&self, route: &str, body: &[u8], token: Option<&str>) -> Result<EventRecord, Rejection> {
        let family = Family::from_route(route).ok_or(Rejection::UnknownRoute)?;
        self.check_token(token)?;
        let record = decode(body).map_err(|e| Rejection::Malformed(e.to_string()))?;
        if record.family() != family {
            return Err(Rejection::RouteFamilyMismatch { route: family, event: record.family() });
        }
        if let Err(v) = record.validate() {
            let reasons: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(Rejection::Malformed(reasons.join("; ")));
        }
        self.store.append_received(record.clone(), Some(now_ms())).map_err(|e| match e {
            StoreError::Invalid(v) => Rejection::Malformed(format!("{v:?}")),
            other => Rejection::Storage(other.to_string()),
        })?;
        let core = record.core();
        for (kind, id) in [(IdKind::User, core.user_id), (IdKind::Window, core.window_id), (IdKind::Session, core.session_id)] {
            if id != 0 {
                self.ids.register(kind, id).map_err(|e| Rejection::Storage(e.to_string()))?;
            }
        }
        Ok(record)
    }

    /// Status-code view of [`Collector::ingest`].
    pub fn handle_post(&self, route: &str, body: &[u8], token: Option<&str>) -> StatusCode {
        match self.ingest(route, body, token) {
            Ok(_) => StatusCode::NO_CONTENT,
            Err(r) => r.status(),
        }
    }

    /// Uniformly random unregistered id in `[1, 2^53)`.
    pub fn allocate_id(&self, kind: IdKind) -> Result<u64, CollectorError> {
        let mut rng = self.rng.lock().unwrap_or_else(|e| e.into_inner());
        self.ids.allocate_with(kind, || rng.random_range(1..ID_LIMIT))
    }
}

fn header_token(headers: &HeaderMap) -> Option<String> {
    headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()).map(str::to_owned)
}

async fn post_log(
    State(c): State<Arc<Collector>>,
    UrlPath(family): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> StatusCode {
    let route = format!("/log/{family}");
    let token = header_token(&headers);
    tokio::task::spawn_blocking(move || c.handle_post(&route, &body, token.as_deref()))
        .await
        .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
}

async fn post_id(State(c): State<Arc<Collector>>, UrlPath(kind): UrlPath<String>, headers: HeaderMap) -> Response {
    if let Err(r) = c.check_token(header_token(&headers).as_deref()) {
        return r.status().into_response();
    }
    let Ok(kind) = kind.parse::<IdKind>() else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match tokio::task::spawn_blocking(move || c.allocate_id(kind)).await {
        Ok(Ok(id)) => Json(serde_json::json!({ "id": id })).into_response(),
        _ => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

pub fn router(collector: Arc<Collector>) -> Router {
    Router::new()
        .route("/log/{family}", post(post_log))
        .route("/id/{kind}", post(post_id))
        .with_state(collector)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, collector: Arc<Collector>) -> std::io::Result<()> {
    axum::serve(listener, router(collector)).await
}

/// Binds `addr` and serves on the current runtime.
pub async fn bind_and_serve(addr: SocketAddr, collector: Arc<Collector>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve(listener, collector).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use browselog_core::event::encode;
    use browselog_core::simulator::{generate, ScenarioConfig};

    fn sample() -> Vec<EventRecord> {
        generate(&ScenarioConfig { seed: 2, users: 1, sessions_per_user: 1, ..Default::default() }).unwrap().events
    }

    fn first(events: &[EventRecord], family: Family) -> EventRecord {
        events.iter().find(|e| e.family() == family).unwrap().clone()
    }

    #[test]
    fn session_start_is_accepted() {
        let c = Collector::in_memory(CollectorConfig::default());
        let events = sample();
        let start = events.iter().find(|e| e.event_code() == 200).unwrap();
        assert_eq!(c.handle_post("/log/session", &encode(start), None), StatusCode::NO_CONTENT);
        assert_eq!(c.store().len(), 1);
        assert!(c.ids().contains(IdKind::Session, start.core().session_id));
    }

    #[test]
    fn family_mismatch_is_conflict() {
        let c = Collector::in_memory(CollectorConfig::default());
        let b = first(&sample(), Family::Browsing);
        assert_eq!(c.handle_post("/log/window", &encode(&b), None), StatusCode::CONFLICT);
        assert!(c.store().is_empty());
    }

    #[test]
    fn out_of_range_cause_is_bad_request() {
        let c = Collector::in_memory(CollectorConfig::default());
        let b = first(&sample(), Family::Browsing);
        let mut v: serde_json::Value = serde_json::from_slice(&encode(&b)).unwrap();
        v["cause"] = 12.into();
        let body = serde_json::to_vec(&v).unwrap();
        assert_eq!(c.handle_post("/log/browsing", &body, None), StatusCode::BAD_REQUEST);
        assert_eq!(c.handle_post("/log/browsing", b"{not json", None), StatusCode::BAD_REQUEST);
        assert_eq!(c.handle_post("/log/tabs", &encode(&b), None), StatusCode::NOT_FOUND);
        assert!(c.store().is_empty());
    }

    #[test]
    fn token_is_enforced_when_configured() {
        let c = Collector::in_memory(CollectorConfig { token: Some("s3cret".into()), fsync: false });
        let s = first(&sample(), Family::Session);
        assert_eq!(c.handle_post("/log/session", &encode(&s), None), StatusCode::FORBIDDEN);
        assert_eq!(c.handle_post("/log/session", &encode(&s), Some("nope")), StatusCode::FORBIDDEN);
        assert_eq!(c.handle_post("/log/session", &encode(&s), Some("s3cret")), StatusCode::NO_CONTENT);
    }

    #[test]
    fn allocations_are_distinct_and_registered() {
        let c = Collector::in_memory(CollectorConfig::default());
        let ids: Vec<u64> = (0..10_000).map(|_| c.allocate_id(IdKind::Window).unwrap()).collect();
        let distinct: std::collections::HashSet<u64> = ids.iter().copied().collect();
        assert_eq!(distinct.len(), 10_000);
        let mut registered = c.ids().ids(IdKind::Window);
        let mut sorted = ids.clone();
        registered.sort_unstable();
        sorted.sort_unstable();
        assert_eq!(registered, sorted);
        assert!(ids.iter().all(|&id| id > 0 && id < ID_LIMIT));
    }

    #[test]
    fn file_backed_collector_persists_events() {
        let dir = tempfile::tempdir().unwrap();
        let events = sample();
        {
            let c = Collector::open_dir(dir.path(), CollectorConfig::default()).unwrap();
            for e in &events {
                assert_eq!(c.handle_post(e.family().route(), &encode(e), None), StatusCode::NO_CONTENT);
            }
        }
        let c = Collector::open_dir(dir.path(), CollectorConfig::default()).unwrap();
        assert_eq!(c.store().len(), events.len());
        assert!(dir.path().join("ids.log").exists());
    }
}
