//! HTTP session service for collecting calibration and active-learning
//! feedback from a person.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create from a [`SessionConfig`] |
//! | GET | `/sessions/{id}` | session overview with the world layout |
//! | GET | `/sessions/{id}/query` | outstanding query, or the final belief |
//! | POST | `/sessions/{id}/feedback` | answer the outstanding query |
//! | GET | `/sessions/{id}/belief` | posterior summary (`?k=` top entries) |
//! | GET | `/sessions/{id}/export` | the full persisted document |
//! | GET | `/sessions/{id}/holdout` | hold-one-out β̂ fits |
//!
//! Requests for one session are serialized; sessions are independent.

pub mod config;
mod error;
pub mod session;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use rrl_core::mdp::GridWorldDoc;
use rrl_core::rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tower_http::cors::CorsLayer;

pub use config::SessionConfig;
pub use error::{ApiError, ErrorBody};
pub use session::{BeliefSummary, HoldOutRow, Phase, QueryView, Session, SessionDoc, Submission};
pub use store::Store;

type Shared = Arc<Mutex<Session>>;

/// Live sessions backed by a [`Store`].
pub struct AppState {
    store: Store,
    sessions: std::sync::Mutex<HashMap<String, Shared>>,
    counter: AtomicU64,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl AppState {
    /// Opens the store and restores every session in it by replaying its log.
    pub fn open(store: Store) -> Result<Arc<Self>, ApiError> {
        let mut sessions = HashMap::new();
        for id in store.ids()? {
            let s = Session::restore(store.load(&id)?)?;
            sessions.insert(id, Arc::new(Mutex::new(s)));
        }
        Ok(Arc::new(Self {
            store,
            sessions: std::sync::Mutex::new(sessions),
            counter: AtomicU64::new(0),
        }))
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    fn fresh_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64);
        format!("s{:016x}", rng::derive(nanos, &[n]))
    }
}

/// Runs blocking session work off the async executor, holding the session lock.
async fn with_session<T, F>(state: &AppState, id: &str, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> Result<T, ApiError> + Send + 'static,
{
    let shared = state.get(id)?;
    let mut guard = shared.lock_owned().await;
    tokio::task::spawn_blocking(move || f(&mut guard))
        .await
        .map_err(|e| ApiError::internal(format!("worker: {e}")))?
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionOverview {
    pub id: String,
    pub phase: Phase,
    pub world: GridWorldDoc,
    pub calibration_rewards: Vec<[f64; 4]>,
    pub calibration_queries: usize,
    pub inference_rounds: usize,
    pub responses: usize,
}

fn overview(s: &Session) -> SessionOverview {
    SessionOverview {
        id: s.doc.id.clone(),
        phase: s.doc.phase,
        world: s.world().doc().clone(),
        calibration_rewards: s.doc.calibration_rewards.clone(),
        calibration_queries: s.doc.config.calibration.items().len(),
        inference_rounds: s.doc.config.inference.rounds,
        responses: s.doc.log.len(),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return serde_json::from_str("{}").map_err(|e| ApiError::bad_request(e.to_string()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn create(State(state): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<SessionOverview>), ApiError> {
    let config: SessionConfig = parse(&body)?;
    let id = config.id.clone().unwrap_or_else(|| state.fresh_id());
    if state.sessions.lock().expect("session map poisoned").contains_key(&id) {
        return Err(ApiError::conflict(format!("session {id} already exists")));
    }
    let st = state.clone();
    let session = tokio::task::spawn_blocking(move || -> Result<Session, ApiError> {
        let s = Session::create(id, config, now_ms())?;
        st.store.save(&s.doc)?;
        Ok(s)
    })
    .await
    .map_err(|e| ApiError::internal(format!("worker: {e}")))??;
    let view = overview(&session);
    let mut map = state.sessions.lock().expect("session map poisoned");
    if map.contains_key(&view.id) {
        return Err(ApiError::conflict(format!("session {} already exists", view.id)));
    }
    map.insert(view.id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn show(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionOverview>, ApiError> {
    with_session(&state, &id, |s| Ok(overview(s))).await.map(Json)
}

async fn query(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<QueryView>, ApiError> {
    let st = state.clone();
    with_session(&state, &id, move |s| {
        let had = s.doc.outstanding.is_some();
        let view = s.query_view()?;
        if !had && s.doc.outstanding.is_some() {
            st.store.save(&s.doc)?;
        }
        Ok(view)
    })
    .await
    .map(Json)
}

async fn feedback(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<BeliefSummary>, ApiError> {
    let sub: Submission = parse(&body)?;
    let st = state.clone();
    with_session(&state, &id, move |s| {
        let before = s.doc.log.len();
        let summary = s.submit(&sub, now_ms())?;
        if s.doc.log.len() != before {
            st.store.save(&s.doc)?;
        }
        Ok(summary)
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
struct TopK {
    k: Option<usize>,
}

async fn belief(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<TopK>,
) -> Result<Json<BeliefSummary>, ApiError> {
    let k = q.k.unwrap_or(5);
    with_session(&state, &id, move |s| s.belief_summary(k)).await.map(Json)
}

async fn export(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionDoc>, ApiError> {
    with_session(&state, &id, |s| Ok(s.doc.clone())).await.map(Json)
}

async fn holdout(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Vec<HoldOutRow>>, ApiError> {
    with_session(&state, &id, |s| s.hold_one_out()).await.map(Json)
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/belief", get(belief))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/holdout", get(holdout))
        .fallback(fallback)
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, store: Store) -> std::io::Result<()> {
    let state = AppState::open(store).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
