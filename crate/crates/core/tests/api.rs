use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use driftscope::api::{router, AppState};
use driftscope::testkit::{generate_log, ProcessSpec};

async fn call(app: &Router, method: &str, uri: &str, body: Option<Body>, json_body: bool) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if json_body {
        req = req.header("content-type", "application/json");
    }
    let resp = app
        .clone()
        .oneshot(req.body(body.unwrap_or_else(Body::empty)).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, "GET", uri, None, false).await
}

async fn post_json(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", uri, Some(Body::from(body.to_string())), true).await
}

fn fixture_csv(traces: usize) -> String {
    let g = generate_log(&ProcessSpec::example(11), traces, &[]).unwrap();
    let mut buf = Vec::new();
    g.log.write_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

async fn upload(app: &Router, csv: String) -> String {
    let (status, v) = call(app, "POST", "/logs?trace_id=case&timestamp=time", Some(Body::from(csv)), false).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["log_id"].as_str().unwrap().to_string()
}

async fn wait_ready(app: &Router, model: &str) -> Value {
    for _ in 0..600 {
        let (status, v) = get(app, &format!("/models/{model}")).await;
        assert_eq!(status, StatusCode::OK);
        match v["status"].as_str().unwrap() {
            "training" => tokio::time::sleep(Duration::from_millis(20)).await,
            "ready" => return v,
            other => panic!("model {model} ended as {other}: {v}"),
        }
    }
    panic!("model {model} never finished training");
}

async fn trained(app: &Router, body: Value) -> String {
    let log = upload(app, fixture_csv(1000)).await;
    let (status, v) = post_json(app, &format!("/logs/{log}/models"), body).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    let model = v["model_id"].as_str().unwrap().to_string();
    wait_ready(app, &model).await;
    model
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let app = router(AppState::new(None));
    assert_eq!(get(&app, "/models/unknown/scores").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/models/unknown").await.0, StatusCode::NOT_FOUND);
    assert_eq!(
        post_json(&app, "/logs/nope/models", json!({})).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn malformed_upload_is_422() {
    let app = router(AppState::new(None));
    let (status, _) = call(&app, "POST", "/logs?trace_id=case", Some(Body::from("a,b\n1,2\n")), false).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, v) = call(&app, "POST", "/logs?trace_id=case", Some(Body::from("case,x\n")), false).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "empty log");
}

#[tokio::test]
async fn drift_is_cached_and_never_rescored() {
    let app = router(AppState::new(None));
    let model = trained(&app, json!({ "train_events": 3000 })).await;

    let (status, scores) = get(&app, &format!("/models/{model}/scores")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(scores["kind"], "trace_scores");
    assert_eq!(scores["series"][0]["points"].as_array().unwrap().len(), 1000);

    let uri = format!("/models/{model}/drift?window=80");
    let (s1, a) = get(&app, &uri).await;
    let (s2, b) = get(&app, &uri).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    assert_eq!(a["points"].as_array().unwrap().len(), 1000 - 80 + 1);
    for w in [40, 120, 200] {
        assert_eq!(get(&app, &format!("/models/{model}/drift?window={w}")).await.0, StatusCode::OK);
    }
    let (_, status) = get(&app, &format!("/models/{model}")).await;
    assert_eq!(status["score_runs"], 1);
}

#[tokio::test]
async fn invalid_drift_parameters_are_422() {
    let app = router(AppState::new(None));
    let model = trained(&app, json!({ "train_events": 3000 })).await;
    for q in ["window=3", "window=41", "window=2000", "threshold=0", "threshold=1.5", "step=0", "window=abc"] {
        let (status, v) = get(&app, &format!("/models/{model}/drift?{q}")).await;
        assert!(
            status == StatusCode::UNPROCESSABLE_ENTITY || status == StatusCode::BAD_REQUEST,
            "{q}: {status} {v}"
        );
        assert_ne!(status, StatusCode::OK);
    }
    let (status, _) = get(&app, &format!("/models/{model}/outliers?k=-1")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = post_json(&app, &format!("/models/{model}/segments"), json!({ "ranges": [[0, 5000]] })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let log = upload(&app, fixture_csv(50)).await;
    let (status, _) = post_json(&app, &format!("/logs/{log}/models"), json!({ "train_events": 1_000_000 })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn second_training_job_conflicts() {
    let app = router(AppState::new(None));
    let log = upload(&app, fixture_csv(1500)).await;
    let (s1, first) = post_json(&app, &format!("/logs/{log}/models"), json!({ "train_events": 12000 })).await;
    assert_eq!(s1, StatusCode::ACCEPTED);
    let (s2, _) = post_json(&app, &format!("/logs/{log}/models"), json!({ "train_events": 100 })).await;
    // Training may occasionally finish before the second request lands.
    let (_, status) = get(&app, &format!("/models/{}", first["model_id"].as_str().unwrap())).await;
    if status["status"] == "training" {
        assert_eq!(s2, StatusCode::CONFLICT);
    }
    // While training, reads see either 409 or the complete model, never a partial one.
    let model = first["model_id"].as_str().unwrap();
    let (s, v) = get(&app, &format!("/models/{model}/scores")).await;
    assert!(s == StatusCode::CONFLICT || v["series"][0]["points"].as_array().unwrap().len() == 1500);
    wait_ready(&app, model).await;
    let (s3, _) = post_json(&app, &format!("/logs/{log}/models"), json!({ "train_events": 100 })).await;
    assert_eq!(s3, StatusCode::ACCEPTED);
}

#[tokio::test]
async fn segment_model_and_fd_medians() {
    let app = router(AppState::new(None));
    let model = trained(&app, json!({ "segment": [0, 500] })).await;
    let (status, segs) = post_json(&app, &format!("/models/{model}/segments"), json!({ "cuts": [500] })).await;
    assert_eq!(status, StatusCode::OK, "{segs}");
    assert_eq!(segs["segments"].as_array().unwrap().len(), 2);

    let (status, density) = get(&app, &format!("/models/{model}/segments/1/density")).await;
    assert_eq!(status, StatusCode::OK, "{density}");
    assert_eq!(density["plot"]["kind"], "attribute_density");
    for a in density["summary"]["per_attribute"].as_array().unwrap() {
        assert!(a["median"].as_f64().unwrap() <= 0.0);
    }

    let (status, d) = get(&app, &format!("/models/{model}/segments/1/decompose?attribute=area")).await;
    assert_eq!(status, StatusCode::OK, "{d}");
    let fds = d["breakdown"]["fd_components"].as_array().unwrap();
    assert!(!fds.is_empty());
    for fd in fds {
        let mut v: Vec<f64> = fd["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        v.sort_by(f64::total_cmp);
        assert!(v[v.len() / 2] <= 0.0, "{}", fd["name"]);
    }

    let (status, _) = get(&app, &format!("/models/{model}/segments/1/decompose?attribute=nope")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = get(&app, &format!("/models/{model}/segments/1/decompose")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = get(&app, &format!("/models/{model}/segments/9/density")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, o) = get(&app, &format!("/models/{model}/outliers?k=2.5&segment=1")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(o["outliers"].is_array());
}

#[tokio::test]
async fn segments_from_drift_points() {
    let app = router(AppState::new(None));
    let model = trained(&app, json!({ "train_events": 3000 })).await;
    let (status, v) = post_json(
        &app,
        &format!("/models/{model}/segments"),
        json!({ "drift_points": { "window": 100, "threshold": 0.01 } }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let segs = v["segments"].as_array().unwrap();
    assert_eq!(segs[0]["start_trace"], 0);
    assert_eq!(segs.last().unwrap()["end_trace"], 1000);
    let (_, listed) = get(&app, &format!("/models/{model}/segments")).await;
    assert_eq!(listed["segments"], v["segments"]);
}

#[tokio::test]
async fn data_dir_persists_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(Some(dir.path().to_path_buf())));
    let model = trained(&app, json!({ "train_events": 2000 })).await;
    assert!(dir.path().join("l1.csv").exists());
    let saved = driftscope::EdbnModel::load(dir.path().join(format!("{model}.json"))).unwrap();
    assert!(!saved.attributes().is_empty());
}

#[tokio::test]
async fn cors_headers_present() {
    let app = router(AppState::new(None));
    let resp = app
        .oneshot(
            Request::builder()
                .uri("/models/x")
                .header("origin", "http://localhost:5173")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}
