use std::process::Command;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dgeofence::service::store::{RunRecord, RunStatus, Store};
use dgeofence::service::router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> Router {
    router(Arc::new(Store::open(dir).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn preset(app: &Router, name: &str) -> (String, [f64; 2]) {
    let (status, body) = call(app, "POST", "/api/datasets", Some(json!({ "preset": name }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let poi = [body["pois"][0][0].as_f64().unwrap(), body["pois"][0][1].as_f64().unwrap()];
    (body["dataset_id"].as_str().unwrap().to_string(), poi)
}

fn solve_body(dataset_id: &str, poi: [f64; 2], seed: u64) -> Value {
    json!({
        "dataset_id": dataset_id,
        "poi": { "x": poi[0], "y": poi[1] },
        "d": 4,
        "window": { "min_frac": 0.12, "max_frac": 0.15 },
        "seed": seed
    })
}

#[tokio::test]
async fn schema_exposes_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = call(&app(dir.path()), "GET", "/api/schema", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["solve"]["weights"]["a_2dw"]["default"], 1.0);
    assert_eq!(body["solve"]["window"]["default"]["max_frac"], 0.15);
    assert_eq!(body["solve"]["seed"]["required"], true);
}

#[tokio::test]
async fn solve_happy_path_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, poi) = preset(&app, "data1").await;

    let (status, a) = call(&app, "POST", "/api/solve?wait=true", Some(solve_body(&id, poi, 5))).await;
    assert_eq!(status, StatusCode::OK, "{a}");
    assert_eq!(a["status"], "done");
    assert_eq!(a["result"]["feasible"], true);
    assert!(a["metrics"]["ucr"].as_f64().unwrap() > 0.0);

    let (_, b) = call(&app, "POST", "/api/solve?wait=true", Some(solve_body(&id, poi, 5))).await;
    assert_ne!(a["run_id"], b["run_id"]);
    assert_eq!(a["result"], b["result"]);

    let (status, list) = call(&app, "GET", "/api/runs", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn async_solve_reaches_done() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, poi) = preset(&app, "data2").await;
    let (status, queued) = call(&app, "POST", "/api/solve", Some(solve_body(&id, poi, 1))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let uri = format!("/api/runs/{}", queued["run_id"].as_str().unwrap());
    for _ in 0..600 {
        let (_, rec) = call(&app, "GET", &uri, None).await;
        if rec["status"] == "done" {
            return;
        }
        assert_ne!(rec["status"], "failed", "{rec}");
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    }
    panic!("run did not finish");
}

#[tokio::test]
async fn circular_run() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, poi) = preset(&app, "data1").await;
    let body = json!({
        "dataset_id": id,
        "poi": { "x": poi[0], "y": poi[1] },
        "params": { "generations": 40 },
        "seed": 2
    });
    let (status, rec) = call(&app, "POST", "/api/solve/circular?wait=true", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{rec}");
    assert!(rec["result"]["r"].as_f64().unwrap() > 0.0);
    assert_eq!(rec["metrics"]["geofence_kind"], "circular");
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, poi) = preset(&app, "data1").await;

    let (status, body) = call(&app, "GET", "/api/runs/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"]["code"].is_string());
    assert_eq!(call(&app, "GET", "/api/datasets/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "DELETE", "/api/runs/nope", None).await.0, StatusCode::NOT_FOUND);

    let mut no_seed = solve_body(&id, poi, 0);
    no_seed.as_object_mut().unwrap().remove("seed");
    assert_eq!(call(&app, "POST", "/api/solve", Some(no_seed)).await.0, StatusCode::BAD_REQUEST);

    let mut unknown = solve_body(&id, poi, 0);
    unknown["dataset_id"] = json!("missing");
    assert_eq!(call(&app, "POST", "/api/solve", Some(unknown)).await.0, StatusCode::NOT_FOUND);

    let mut infeasible = solve_body(&id, poi, 0);
    infeasible["window"] = json!({ "min_cells": 0, "max_cells": 0 });
    infeasible["flags"] = json!({ "poi_hard": true });
    let (status, body) = call(&app, "POST", "/api/solve", Some(infeasible)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(body["error"]["code"], "infeasible");
    let (_, runs) = call(&app, "GET", "/api/runs", None).await;
    assert!(runs.as_array().unwrap().is_empty(), "a rejected request leaves no run");

    let (status, _) = call(&app, "POST", "/api/datasets", Some(json!({ "preset": "nope" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn delete_removes_run() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, poi) = preset(&app, "data1").await;
    let (_, rec) = call(&app, "POST", "/api/solve?wait=true", Some(solve_body(&id, poi, 0))).await;
    let uri = format!("/api/runs/{}", rec["run_id"].as_str().unwrap());
    assert_eq!(call(&app, "DELETE", &uri, None).await.0, StatusCode::OK);
    assert_eq!(call(&app, "GET", &uri, None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn grid_endpoint_returns_density() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, _) = preset(&app, "data1").await;
    let (status, body) = call(&app, "GET", &format!("/api/datasets/{id}/grid?d=3"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let text = body.to_string();
    assert!(text.contains("1.0"), "peak density is 1: {text}");
}

#[tokio::test]
async fn restart_keeps_runs_and_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let (run, id) = {
        let app = app(dir.path());
        let (id, poi) = preset(&app, "data1").await;
        let (_, rec) = call(&app, "POST", "/api/solve?wait=true", Some(solve_body(&id, poi, 3))).await;
        (rec, id)
    };
    let app = app(dir.path());
    let (status, again) = call(&app, "GET", &format!("/api/runs/{}", run["run_id"].as_str().unwrap()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, run);
    assert_eq!(call(&app, "GET", &format!("/api/datasets/{id}"), None).await.0, StatusCode::OK);
}

#[tokio::test]
async fn cli_and_http_results_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data1.csv");
    let pois = dir.path().join("pois.json");
    let bin = env!("CARGO_BIN_EXE_dgeofence");
    let st = Command::new(bin)
        .args(["synth", "--preset", "data1", "--out"])
        .arg(&csv)
        .arg("--pois-out")
        .arg(&pois)
        .status()
        .unwrap();
    assert!(st.success());
    let doc: Value = serde_json::from_slice(&std::fs::read(&pois).unwrap()).unwrap();
    let (x, y) = (doc["pois"][0][0].as_f64().unwrap(), doc["pois"][0][1].as_f64().unwrap());

    let out = Command::new(bin)
        .args(["solve-discrete", "--data"])
        .arg(&csv)
        .args(["--poi", &format!("{x},{y}"), "--d", "4", "--window-max", "0.15", "--seed", "9"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cli = String::from_utf8(out.stdout).unwrap();

    let app = app(&dir.path().join("state"));
    let req = Request::builder()
        .method("POST")
        .uri("/api/datasets")
        .header("content-type", "text/csv")
        .body(Body::from(std::fs::read(&csv).unwrap()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let summary: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    let id = summary["dataset_id"].as_str().unwrap();

    let req = Request::builder()
        .method("POST")
        .uri("/api/solve?wait=true")
        .header("content-type", "application/json")
        .body(Body::from(solve_body(id, [x, y], 9).to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let rec: RunRecord = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(rec.status, RunStatus::Done);
    let http = serde_json::to_string(&rec.result.unwrap()).unwrap();
    assert_eq!(cli.trim_end(), http);
}
