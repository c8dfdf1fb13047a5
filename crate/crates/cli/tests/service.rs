mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::*;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

#[tokio::test]
async fn idle_state_is_hover() {
    let app = sim_app();
    let (status, state) = call_json(&app, "GET", "/state", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state["simulate"], true);
    assert!(state["playback"].is_null() && state["session"].is_null());
    let depth = state["calibration"]["depth_mm"].as_f64().unwrap();
    for e in state["effectors"].as_array().unwrap() {
        assert_eq!(e["x"].as_f64().unwrap(), 0.0);
        assert!((e["y"].as_f64().unwrap() + depth - 3.0).abs() < 1e-12);
        assert_eq!(e["contact"], "hover");
    }
}

#[tokio::test]
async fn pattern_playback_runs_to_hover() {
    let app = sim_app();
    let (status, view) = call_json(
        &app,
        "POST",
        "/pattern/play",
        Some(json!({ "kind": "static", "id": 1 })),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{view}");
    assert_eq!(view["ticks"], 180);
    let state = wait_idle(&app).await;
    assert_eq!(state["frames_sent"], 720);
    assert!(state["effectors"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["contact"] == "hover"));

    let (status, err) = call_json(&app, "POST", "/pattern/play", Some(json!({ "id": 12 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "UnknownPattern");
}

#[tokio::test]
async fn calibration_endpoint() {
    let app = sim_app();
    let (status, state) = call_json(
        &app,
        "POST",
        "/calibration",
        Some(json!({ "thickness_mm": 13.0, "width_mm": 16.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert!((state["calibration"]["depth_mm"].as_f64().unwrap() - 21.0).abs() < 1e-12);
    assert!((state["effectors"][0]["y"].as_f64().unwrap() + 18.0).abs() < 1e-12);

    let (status, err) = call_json(
        &app,
        "POST",
        "/calibration",
        Some(json!({ "thickness_mm": 0.0, "width_mm": 16.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "InvalidFinger");
}

#[tokio::test]
async fn session_conflicts_and_domain_errors() {
    let app = sim_app();
    let (status, _) = call_json(
        &app,
        "POST",
        "/experiment/answer",
        Some(json!({ "trial_id": 1, "answer": 1 })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, err) = call_json(&app, "GET", "/experiment/report", None).await;
    assert_eq!(
        (status, err["error"].as_str()),
        (StatusCode::CONFLICT, Some("NoSession"))
    );

    let start = json!({ "catalog": "static", "reps": 1, "seed": 4, "subject": "s01" });
    let (status, err) = call_json(
        &app,
        "POST",
        "/experiment/start",
        Some(json!({ "catalog": "nope", "subject": "x" })),
    )
    .await;
    assert_eq!(
        (status, err["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("UnknownCatalog"))
    );
    let (status, err) = call_json(
        &app,
        "POST",
        "/experiment/start",
        Some(json!({ "catalog": "static", "reps": 0, "subject": "x" })),
    )
    .await;
    assert_eq!(
        (status, err["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("InvalidRepetitions"))
    );

    let (status, view) = call_json(&app, "POST", "/experiment/start", Some(start.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["total"], 9);
    let current = view["current_trial"].as_u64().unwrap();
    assert_eq!(current, 1);

    let (status, err) = call_json(&app, "POST", "/experiment/start", Some(start)).await;
    assert_eq!(
        (status, err["error"].as_str()),
        (StatusCode::CONFLICT, Some("SessionActive"))
    );
    let (status, _) = call_json(&app, "POST", "/pattern/play", Some(json!({ "id": 1 }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call_json(
        &app,
        "POST",
        "/calibration",
        Some(json!({ "thickness_mm": 15.0, "width_mm": 16.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let answer =
        |trial_id: u64, answer: u64| Some(json!({ "trial_id": trial_id, "answer": answer }));
    // Answers are accepted once the stimulus has been delivered.
    wait_idle(&app).await;
    let (status, err) = call_json(&app, "POST", "/experiment/answer", answer(99, 1)).await;
    assert_eq!(
        (status, err["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("UnknownTrial"))
    );
    let (status, err) = call_json(&app, "POST", "/experiment/answer", answer(current, 0)).await;
    assert_eq!(
        (status, err["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("InvalidAnswer"))
    );
    let (status, err) = call_json(&app, "POST", "/experiment/answer", answer(current + 1, 1)).await;
    assert_eq!(
        (status, err["error"].as_str()),
        (StatusCode::CONFLICT, Some("NotCurrentTrial"))
    );

    let (status, view) = call_json(&app, "POST", "/experiment/answer", answer(current, 3)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["answered"], 1);
    assert_eq!(view["current_trial"], 2);
    let (status, err) = call_json(&app, "POST", "/experiment/answer", answer(current, 3)).await;
    assert_eq!(
        (status, err["error"].as_str()),
        (StatusCode::CONFLICT, Some("AlreadyAnswered"))
    );

    let (status, err) = call_json(&app, "GET", "/experiment/report", None).await;
    assert_eq!(
        (status, err["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("IncompleteSession"))
    );

    let (status, state) = call_json(&app, "POST", "/experiment/abort", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(state["session"].is_null());
    wait_idle(&app).await;
    let (status, _) = call_json(&app, "POST", "/pattern/play", Some(json!({ "id": 2 }))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
}

#[tokio::test]
async fn complete_session_reports_and_logs() {
    let app = sim_app();
    let log = scripted_session(&app, "slippage", 2, 9, 3).await;
    let lines: Vec<Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1 + 2 * 10);
    let count = |e: &str| lines.iter().filter(|l| l["event"] == e).count();
    assert_eq!(
        (
            count("schedule"),
            count("stimulus_delivered"),
            count("response")
        ),
        (1, 10, 10)
    );
    assert!(lines.iter().all(|l| l["ts"].is_string()));

    let (status, state) = call_json(&app, "GET", "/state", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state["session"]["complete"], true);
    assert!(state["session"]["current_trial"].is_null());

    let (status, report) = call_json(&app, "GET", "/experiment/report", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["catalog_id"], "default-slippage");
    let diagonal: u64 = (0..5)
        .map(|i| report["matrix"]["counts"][i][i].as_u64().unwrap())
        .sum();
    assert_eq!(diagonal, 10 - 3);
    let (status, text) = call(&app, "GET", "/experiment/report?format=text", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(text.starts_with("catalog: default-slippage\n"));

    // A finished session no longer blocks a new one.
    let (status, _) = call_json(
        &app,
        "POST",
        "/experiment/start",
        Some(json!({ "catalog": "static", "reps": 1, "subject": "s02" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
}

async fn next_events(body: &mut Body, until: &str) -> Vec<(String, Value)> {
    let mut buf = String::new();
    let mut events = Vec::new();
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(10), body.frame())
            .await
            .expect("event stream stalled")
            .expect("stream ended")
            .unwrap();
        let Ok(data) = frame.into_data() else {
            continue;
        };
        buf.push_str(std::str::from_utf8(&data).unwrap());
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let mut name = String::new();
            let mut payload = String::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    name = v.trim().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    payload.push_str(v.trim());
                }
            }
            if name.is_empty() {
                continue;
            }
            let done = name == until;
            events.push((name, serde_json::from_str(&payload).unwrap()));
            if done {
                return events;
            }
        }
    }
}

#[tokio::test]
async fn event_stream_throttles_poses() {
    let app = sim_app();
    let resp = app
        .clone()
        .oneshot(Request::get("/events").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();

    let (status, _) = call_json(
        &app,
        "POST",
        "/pattern/play",
        Some(json!({ "kind": "slippage", "id": 1 })),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let events = next_events(&mut body, "playback_finished").await;
    assert_eq!(events[0].0, "playback_started");
    let times: Vec<f64> = events
        .iter()
        .filter(|e| e.0 == "pose")
        .map(|e| e.1["t"].as_f64().unwrap())
        .collect();
    assert!(times.len() >= 10, "{times:?}");
    for w in times.windows(2) {
        assert!(
            w[1] - w[0] >= 0.05 - 1e-9,
            "pose events closer than 50 ms: {w:?}"
        );
    }
    let finished = &events.last().unwrap().1;
    assert_eq!(finished["report"]["frames_sent"].as_u64().unwrap() % 4, 0);

    call_json(
        &app,
        "POST",
        "/experiment/start",
        Some(json!({ "catalog": "static", "reps": 1, "subject": "s01" })),
    )
    .await;
    let events = next_events(&mut body, "stimulus_delivered").await;
    let names: Vec<&str> = events
        .iter()
        .map(|e| e.0.as_str())
        .filter(|n| *n != "pose")
        .collect();
    assert_eq!(
        names,
        [
            "session_started",
            "playback_started",
            "stimulus_started",
            "playback_finished",
            "stimulus_delivered"
        ]
    );
}
