use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use layplan::journal::Journal;
use layplan::service::{router, AppState, ServiceConfig};
use layplan_core::metrics::TrigramEmbedder;
use layplan_core::planner::{render_svg, ChatBackend, ScriptedBackend};
use layplan_core::Layout;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn app_with(config: ServiceConfig, backend: Option<Arc<dyn ChatBackend>>, journal: Option<Journal>) -> Router {
    let state = AppState::new(config, backend, Arc::new(TrigramEmbedder::default()), None, journal).unwrap();
    router(Arc::new(state))
}

fn app() -> Router {
    app_with(ServiceConfig::default(), None, None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body, None).await;
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, v)
}

async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

fn spec() -> Value {
    json!({"caption": "A dog on a lawn.", "format": "int128", "mode": "closed", "canvas_w": 128.0, "canvas_h": 128.0})
}

fn dog_layout() -> Value {
    json!({"canvas_w": 128.0, "canvas_h": 128.0, "elements": [
        {"id": "e0", "kind": "visual_object", "label": "dog", "bbox": {"left": 10.0, "top": 10.0, "right": 40.0, "bottom": 40.0}},
        {"id": "e1", "kind": "visual_object", "label": "ball", "bbox": {"left": 80.0, "top": 80.0, "right": 100.0, "bottom": 100.0}}
    ]})
}

async fn open(app: &Router) -> String {
    let (status, v) = call(app, "POST", "/sessions", Some(json!({"spec": spec(), "initial": dog_layout()}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn edit_loop_with_history_and_scrubbing() {
    let app = app();
    let id = open(&app).await;
    assert!(id.starts_with('s'));

    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"text": "move the dog right by 10"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["revision_index"], 1);
    assert_eq!(v["applied_route"], "deterministic_edit");
    assert_eq!(v["layout"]["elements"][0]["bbox"]["left"], 20.0);
    assert_eq!(v["command"]["verb"], "move");

    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"text": "make the ball larger by 50%"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["revision_index"], 2);
    let latest: Layout = serde_json::from_value(v["layout"].clone()).unwrap();

    let (status, svg) = call_raw(&app, "GET", &format!("/sessions/{id}/layout.svg"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(svg).unwrap(), render_svg(&latest));

    let initial: Layout = serde_json::from_value(dog_layout()).unwrap();
    let (_, svg0) = call_raw(&app, "GET", &format!("/sessions/{id}/layout.svg?revision=0"), None, None).await;
    assert_eq!(String::from_utf8(svg0).unwrap(), render_svg(&initial));
    let (status, v) = call(&app, "GET", &format!("/sessions/{id}/layout.svg?revision=9"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_revision");

    let (status, h) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;
    assert_eq!(status, StatusCode::OK);
    let revs = h["revisions"].as_array().unwrap();
    assert_eq!(revs.len(), 3);
    assert_eq!(revs[0]["origin"], "initial");
    assert_eq!(revs[1]["message"], "move the dog right by 10");

    // branching from an earlier revision opens a new session
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"spec": spec(), "initial": revs[1]["layout"]}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_ne!(v["session_id"], id.as_str());
    assert_eq!(v["revision"]["layout"], revs[1]["layout"]);
}

#[tokio::test]
async fn edit_errors_leave_the_session_unchanged() {
    let app = app();
    let id = open(&app).await;
    let uri = format!("/sessions/{id}/message");
    let (status, v) = call(&app, "POST", &uri, Some(json!({"text": "move the unicorn up"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "selector_not_found");

    // the move shrinks to the canvas edge, then nothing is left
    let (status, v) = call(&app, "POST", &uri, Some(json!({"text": "move the dog left by 500"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["applied_magnitude"], 10.0);
    let (status, v) = call(&app, "POST", &uri, Some(json!({"text": "move the dog left by 5"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "no_feasible_move");

    let (status, v) = call(&app, "POST", &uri, Some(json!({"text": "make it feel warmer"}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"], "no_backend");

    let (_, h) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;
    assert_eq!(h["revisions"].as_array().unwrap().len(), 2, "failed messages must not add revisions");
}

#[tokio::test]
async fn unknown_sessions_and_bad_input() {
    let app = app();
    let (status, v) = call(&app, "POST", "/sessions/s999999/message", Some(json!({"text": "move the dog up"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_session");
    let (status, _) = call(&app, "GET", "/sessions/nope/history", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let mut bad = dog_layout();
    bad["elements"][0]["bbox"]["right"] = json!(5.0);
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"spec": spec(), "initial": bad}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "invalid_layout");

    let mut s = spec();
    s["canvas_w"] = json!(0.0);
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"spec": s}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "invalid_spec");

    let (status, v) = call(&app, "POST", "/plan", Some(json!({"spec": spec()}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"], "no_backend");
}

#[tokio::test]
async fn empty_session_without_backend() {
    let app = app();
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"spec": spec()}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["revision"]["layout"]["elements"], json!([]));
}

#[tokio::test]
async fn backend_plans_and_handles_free_form_messages() {
    let backend = Arc::new(ScriptedBackend::new(vec![
        Ok("```\ndog: [10, 10, 40, 40]\nball: [80, 80, 100, 100]\n```".into()),
        Ok("```\ndog: [12, 60, 42, 90]\nball: [80, 80, 100, 100]\n```".into()),
    ]));
    let app = app_with(ServiceConfig::default(), Some(backend.clone()), None);
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"spec": spec()}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["revision"]["layout"]["elements"].as_array().unwrap().len(), 2);
    let id = v["session_id"].as_str().unwrap();

    // grammar messages never reach the backend
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"text": "move the ball up by 5"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["applied_route"], "deterministic_edit");
    assert_eq!(backend.calls(), 1);

    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"text": "put the dog lower"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["applied_route"], "backend");
    assert_eq!(v["layout"]["elements"][0]["bbox"]["top"], 60.0);
    assert_eq!(backend.calls(), 2);

    let (status, v) = call(&app, "POST", "/plan", Some(json!({"spec": spec()}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["outcome"]["status"], "success");
    assert_eq!(v["repair_count"], 0);
    assert_eq!(v["raw_reply"], "```\ndog: [12, 60, 42, 90]\nball: [80, 80, 100, 100]\n```");

    let (status, v) = call(&app, "POST", "/plan", Some(json!({"spec": spec(), "k": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
}

#[tokio::test]
async fn bearer_token_guards_the_api() {
    let config = ServiceConfig {
        token: Some("sekret".into()),
        ..ServiceConfig::default()
    };
    let app = app_with(config, None, None);
    let (status, body) = call_raw(&app, "GET", "/health", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"ok");

    let create = json!({"spec": spec(), "initial": dog_layout()});
    let (status, body) = call_raw(&app, "POST", "/sessions", Some(create.clone()), None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["error"], "unauthorized");
    let (status, _) = call_raw(&app, "POST", "/sessions", Some(create.clone()), Some("wrong")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call_raw(&app, "POST", "/sessions", Some(create), Some("sekret")).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn evaluate_reads_only_inside_the_data_root() {
    let config = ServiceConfig {
        data_root: fixtures().join("eval"),
        ..ServiceConfig::default()
    };
    let app = app_with(config, None, None);
    let (status, v) = call(&app, "POST", "/evaluate", Some(json!({"gen_file": "gen.jsonl", "ref_file": "ref.jsonl"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let golden: Value = serde_json::from_str(&std::fs::read_to_string(fixtures().join("eval/golden_report.json")).unwrap()).unwrap();
    assert_eq!(v, golden);

    for bad in ["../pipeline/records50.jsonl", "/etc/passwd", "./ref.jsonl", ""] {
        let (status, v) = call(&app, "POST", "/evaluate", Some(json!({"gen_file": bad, "ref_file": "ref.jsonl"}))).await;
        assert_eq!(status, StatusCode::FORBIDDEN, "{bad}");
        assert_eq!(v["error"], "path_not_allowed");
    }
    let (status, _) = call(&app, "POST", "/evaluate", Some(json!({"gen_file": "missing.jsonl", "ref_file": "ref.jsonl"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn journal_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, history) = {
        let app = app_with(ServiceConfig::default(), None, Some(Journal::open(dir.path()).unwrap()));
        let id = open(&app).await;
        for text in ["move the dog right by 10", "move the dog down by 5"] {
            let (status, _) = call(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"text": text}))).await;
            assert_eq!(status, StatusCode::OK);
        }
        let (_, h) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;
        (id, h)
    };
    let state = AppState::new(
        ServiceConfig::default(),
        None,
        Arc::new(TrigramEmbedder::default()),
        None,
        Some(Journal::open(dir.path()).unwrap()),
    )
    .unwrap();
    assert_eq!(state.session_count(), 1);
    let app = router(Arc::new(state));
    let (status, h) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h, history);

    // new ids do not collide with restored ones
    let fresh = open(&app).await;
    assert_ne!(fresh, id);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_messages_serialize_per_session() {
    let app = app();
    let id = open(&app).await;
    let mut tasks = Vec::new();
    for _ in 0..16 {
        let app = app.clone();
        let uri = format!("/sessions/{id}/message");
        tasks.push(tokio::spawn(async move { call(&app, "POST", &uri, Some(json!({"text": "move the ball up by 1"}))).await }));
    }
    let mut indices = Vec::new();
    for t in tasks {
        let (status, v) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        indices.push(v["revision_index"].as_u64().unwrap());
    }
    indices.sort_unstable();
    assert_eq!(indices, (1..=16).collect::<Vec<_>>());
    let (_, h) = call(&app, "GET", &format!("/sessions/{id}/history"), None).await;
    let revs = h["revisions"].as_array().unwrap();
    assert_eq!(revs.len(), 17);
    assert_eq!(revs[16]["layout"]["elements"][1]["bbox"]["top"], 64.0);
}
