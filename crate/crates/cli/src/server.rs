//! HTTP session API.
//!
//! | method | path                          | body            | reply |
//! |--------|-------------------------------|-----------------|-------|
//! | POST   | `/api/sessions`               |                 | 201 `{session_id, outputs, diagnostics}` |
//! | POST   | `/api/sessions/{id}/utterance`| `{text}`        | `{outputs, diagnostics, current_node, topic_stack, pending_intent}` |
//! | GET    | `/api/sessions/{id}/state`    |                 | full state view |
//! | DELETE | `/api/sessions/{id}`          |                 | 204 |
//! | GET    | `/api/graph`                  |                 | `{ir, dot}` |
//!
//! Requests for one session are serialized by a per-session lock; distinct
//! sessions run in parallel. Sessions idle longer than the configured timeout
//! are dropped.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dwg_core::compiler::{emit_dot, ir_to_json};
use dwg_core::runtime::{DialogueState, Engine};
use serde::Deserialize;
use serde_json::{json, Value};
use uuid::Uuid;

struct Session {
    state: tokio::sync::Mutex<DialogueState>,
    last_used: Mutex<Instant>,
}

impl Session {
    fn touch(&self) {
        *self.last_used.lock().expect("clock lock") = Instant::now();
    }

    fn idle_for(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_used.lock().expect("clock lock"))
    }
}

struct Inner {
    engine: Engine,
    graph: Value,
    idle_timeout: Duration,
    sessions: Mutex<HashMap<Uuid, Arc<Session>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(engine: Engine, idle_timeout: Duration) -> Self {
        let graph = json!({
            "ir": ir_to_json(engine.ir(), engine.ontology()),
            "dot": emit_dot(engine.ir(), engine.ontology()),
        });
        Self(Arc::new(Inner {
            engine,
            graph,
            idle_timeout,
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, HashMap<Uuid, Arc<Session>>> {
        self.0.sessions.lock().expect("session table lock")
    }

    pub fn session_count(&self) -> usize {
        self.sessions().len()
    }

    /// Drop every session idle for at least the timeout; returns how many.
    pub fn evict_idle(&self) -> usize {
        let now = Instant::now();
        let limit = self.0.idle_timeout;
        let mut table = self.sessions();
        let before = table.len();
        table.retain(|_, s| s.idle_for(now) < limit);
        before - table.len()
    }

    fn lookup(&self, id: &str) -> Option<Arc<Session>> {
        let id = Uuid::parse_str(id).ok()?;
        let mut table = self.sessions();
        let s = table.get(&id)?.clone();
        if s.idle_for(Instant::now()) >= self.0.idle_timeout {
            table.remove(&id);
            return None;
        }
        s.touch();
        Some(s)
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn unknown(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown session {id}"))
}

async fn create(State(app): State<AppState>) -> Response {
    let (state, out) = app.0.engine.start_session();
    let id = Uuid::new_v4();
    app.sessions().insert(
        id,
        Arc::new(Session {
            state: tokio::sync::Mutex::new(state),
            last_used: Mutex::new(Instant::now()),
        }),
    );
    let body = json!({
        "session_id": id.to_string(),
        "outputs": out.outputs,
        "diagnostics": out.diagnostics,
    });
    (StatusCode::CREATED, Json(body)).into_response()
}

#[derive(Deserialize)]
struct Utterance {
    text: String,
}

async fn utterance(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Utterance>, JsonRejection>,
) -> Response {
    let Some(session) = app.lookup(&id) else {
        return unknown(&id);
    };
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let engine = &app.0.engine;
    let mut state = session.state.lock().await;
    let out = engine.process_utterance(&mut state, &req.text);
    let mut body = engine.summary_view(&state);
    body["outputs"] = json!(out.outputs);
    body["diagnostics"] = json!(out.diagnostics);
    Json(body).into_response()
}

async fn state(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(session) = app.lookup(&id) else {
        return unknown(&id);
    };
    let state = session.state.lock().await;
    Json(app.0.engine.state_view(&state)).into_response()
}

async fn delete(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    let removed = Uuid::parse_str(&id).ok().and_then(|u| app.sessions().remove(&u));
    match removed {
        Some(_) => StatusCode::NO_CONTENT.into_response(),
        None => unknown(&id),
    }
}

async fn graph(State(app): State<AppState>) -> Response {
    Json(app.0.graph.clone()).into_response()
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}", axum::routing::delete(delete))
        .route("/api/sessions/{id}/utterance", post(utterance))
        .route("/api/sessions/{id}/state", get(state))
        .route("/api/graph", get(graph))
        .with_state(app)
}

/// Serve until the listener fails, evicting idle sessions in the background.
pub async fn serve(listener: tokio::net::TcpListener, app: AppState) -> std::io::Result<()> {
    let sweeper = app.clone();
    let period = (app.0.idle_timeout / 4).max(Duration::from_secs(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            sweeper.evict_idle();
        }
    });
    axum::serve(listener, router(app)).await
}
