#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use fivebar_cli::rig::Rig;
use fivebar_cli::service::{router, ServiceOptions};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn sim_app() -> Router {
    router(
        Rig::default(),
        ServiceOptions {
            simulate: true,
            seed: 0,
            log_path: None,
        },
    )
    .unwrap()
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, String) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => builder
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

pub async fn call_json(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, body).await;
    (
        status,
        serde_json::from_str(&text).unwrap_or(Value::String(text)),
    )
}

/// Polls `/state` until no playback is running.
pub async fn wait_idle(app: &Router) -> Value {
    for _ in 0..2000 {
        let (_, state) = call_json(app, "GET", "/state", None).await;
        if state["playback"].is_null() {
            return state;
        }
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    panic!("playback never finished");
}

pub fn fivebar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fivebar"))
        .args(args)
        .output()
        .expect("run fivebar")
}

pub fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("fivebar-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(format!("{}-{name}", std::process::id()))
}

/// Pattern id of every trial, from the schedule record of a session log.
pub fn scheduled_patterns(log: &str) -> Vec<(u64, u64)> {
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["event"], "schedule");
    first["trials"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            (
                t["trial_id"].as_u64().unwrap(),
                t["pattern_id"].as_u64().unwrap(),
            )
        })
        .collect()
}

/// Runs a full session through the service. The scripted subject answers
/// correctly except on every `miss_every`-th trial, where it names the next
/// pattern id instead. Returns the session log captured by the service.
pub async fn scripted_session(
    app: &Router,
    catalog: &str,
    reps: u32,
    seed: u64,
    miss_every: usize,
) -> String {
    let (status, started) = call_json(
        app,
        "POST",
        "/experiment/start",
        Some(
            serde_json::json!({ "catalog": catalog, "reps": reps, "seed": seed, "subject": "s01" }),
        ),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{started}");
    let (_, log) = call(app, "GET", "/experiment/log", None).await;
    let plan = scheduled_patterns(&log);
    let k = plan.iter().map(|p| p.1).max().unwrap();
    let mut current = started["current_trial"].as_u64();
    for (n, (trial_id, pattern)) in plan.iter().enumerate() {
        assert_eq!(current, Some(*trial_id), "trial order");
        wait_idle(app).await;
        let answer = if miss_every > 0 && n % miss_every == miss_every - 1 {
            pattern % k + 1
        } else {
            *pattern
        };
        let (status, view) = call_json(
            app,
            "POST",
            "/experiment/answer",
            Some(serde_json::json!({ "trial_id": trial_id, "answer": answer })),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{view}");
        current = view["current_trial"].as_u64();
    }
    wait_idle(app).await;
    call(app, "GET", "/experiment/log", None).await.1
}
