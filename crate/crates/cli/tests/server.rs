use std::path::PathBuf;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use dwg_cli::load::engine_from_files;
use dwg_cli::server::{router, AppState};
use dwg_core::compiler::CompileOptions;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(idle: Duration) -> (Router, AppState) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/restaurant");
    let (engine, _) = engine_from_files(
        &dir.join("restaurant.dwg"),
        &dir.join("restaurant.onto"),
        CompileOptions::default(),
    )
    .unwrap();
    let state = AppState::new(engine, idle);
    (router(state.clone()), state)
}

async fn call(r: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = r.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

#[tokio::test]
async fn restaurant_dialogue_over_http() {
    let (r, _) = app(Duration::from_secs(60));
    let (status, created) = call(&r, "POST", "/api/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["session_id"].as_str().unwrap().to_string();
    assert!(created["outputs"].is_array());

    let turn = |text: &str| json!({ "text": text });
    let url = format!("/api/sessions/{id}/utterance");
    let mut said = Vec::new();
    for u in ["I am looking for a restaurant!", "In Palo Alto.", "Chinese please."] {
        let (status, v) = call(&r, "POST", &url, Some(turn(u))).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        for key in ["outputs", "current_node", "topic_stack", "pending_intent"] {
            assert!(v.get(key).is_some(), "missing {key}: {v}");
        }
        said.extend(v["outputs"].as_array().unwrap().iter().map(|o| o.as_str().unwrap().to_string()));
    }
    assert_eq!(said, ["In what city?", "How about McDonalds?", "Got it – Su Hong on 4256 El Camino Real?"]);

    let (status, st) = call(&r, "GET", &format!("/api/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    let users = st["history"].as_array().unwrap().iter().filter(|t| t["kind"] == "user").count();
    assert_eq!(users, 3);
    assert!(st["current_node"].is_string());

    let (status, _) = call(&r, "DELETE", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&r, "GET", &format!("/api/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unknown_sessions_are_404() {
    let (r, _) = app(Duration::from_secs(60));
    let fresh = uuid::Uuid::new_v4();
    for (method, uri, body) in [
        ("GET", format!("/api/sessions/{fresh}/state"), None),
        ("GET", "/api/sessions/not-a-uuid/state".to_string(), None),
        ("POST", format!("/api/sessions/{fresh}/utterance"), Some(json!({"text": "hi"}))),
        ("DELETE", format!("/api/sessions/{fresh}"), None),
    ] {
        let (status, v) = call(&r, method, &uri, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{method} {uri}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn malformed_utterance_is_400() {
    let (r, _) = app(Duration::from_secs(60));
    let (_, created) = call(&r, "POST", "/api/sessions", None).await;
    let id = created["session_id"].as_str().unwrap();
    let (status, v) = call(&r, "POST", &format!("/api/sessions/{id}/utterance"), Some(json!({"txt": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].is_string());
}

#[tokio::test]
async fn graph_has_ir_and_dot() {
    let (r, _) = app(Duration::from_secs(60));
    let (status, g) = call(&r, "GET", "/api/graph", None).await;
    assert_eq!(status, StatusCode::OK);
    let nodes = g["ir"]["nodes"].as_array().unwrap().len();
    assert!(nodes > 0);
    let dot = g["dot"].as_str().unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("->").count(), g["ir"]["edges"].as_array().unwrap().len() + g["ir"]["triggers"].as_array().unwrap().len());
}

#[tokio::test]
async fn sessions_are_independent() {
    let (r, _) = app(Duration::from_secs(60));
    let (_, a) = call(&r, "POST", "/api/sessions", None).await;
    let (_, b) = call(&r, "POST", "/api/sessions", None).await;
    let (a, b) = (a["session_id"].as_str().unwrap(), b["session_id"].as_str().unwrap());
    assert_ne!(a, b);
    let (_, va) = call(&r, "POST", &format!("/api/sessions/{a}/utterance"), Some(json!({"text": "I am looking for a restaurant!"}))).await;
    let (_, sb) = call(&r, "GET", &format!("/api/sessions/{b}/state"), None).await;
    assert_eq!(va["outputs"], json!(["In what city?"]));
    assert_eq!(sb["history"].as_array().unwrap().iter().filter(|t| t["kind"] == "user").count(), 0);
}

#[tokio::test]
async fn same_session_requests_are_serialized() {
    let (r, _) = app(Duration::from_secs(60));
    let (_, created) = call(&r, "POST", "/api/sessions", None).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let mut tasks = Vec::new();
    for i in 0..16 {
        let r = r.clone();
        let url = format!("/api/sessions/{id}/utterance");
        tasks.push(tokio::spawn(async move { call(&r, "POST", &url, Some(json!({"text": format!("hello {i}")}))).await }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap().0, StatusCode::OK);
    }
    let (_, st) = call(&r, "GET", &format!("/api/sessions/{id}/state"), None).await;
    let history = st["history"].as_array().unwrap();
    assert_eq!(history.iter().filter(|t| t["kind"] == "user").count(), 16);
    for (i, t) in history.iter().enumerate() {
        assert_eq!(t["index"], json!(i));
    }
}

#[tokio::test]
async fn idle_sessions_are_evicted() {
    let (r, state) = app(Duration::from_millis(50));
    let (_, created) = call(&r, "POST", "/api/sessions", None).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(state.session_count(), 1);
    tokio::time::sleep(Duration::from_millis(80)).await;
    assert_eq!(state.evict_idle(), 1);
    let (status, _) = call(&r, "GET", &format!("/api/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, created) = call(&r, "POST", "/api/sessions", None).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    tokio::time::sleep(Duration::from_millis(80)).await;
    let (status, _) = call(&r, "GET", &format!("/api/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "expired sessions are dropped on access too");
}

#[test]
fn busy_port_exits_1() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/restaurant");
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_dwg"))
        .args(["serve", dir.join("restaurant.dwg").to_str().unwrap(), "-O"])
        .arg(dir.join("restaurant.onto"))
        .args(["--port", &port])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot listen"));
}
