use std::collections::HashMap;
use std::path::Path;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use ezsort::formats::write_items_jsonl;
use ezsort::service::{router, AppState};
use ezsort_core::simulator::{synthesize_similarities, synthetic_items, SyntheticPreorderConfig};
use ezsort_core::ItemRecord;

const ORIGIN: &str = "http://localhost:5173";

fn app(dir: &Path) -> Router {
    let state = AppState::load(dir, dir.join("images")).unwrap();
    router(state, &[ORIGIN.to_string()])
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, _, bytes) = call_raw(app, method, uri, body).await;
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

async fn call_raw(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, bytes)
}

fn payload(n: usize, seed: u64) -> (Value, HashMap<String, f64>) {
    let items = synthetic_items(n, seed);
    let sims = synthesize_similarities(&items, &SyntheticPreorderConfig::default()).unwrap();
    let truth = items.iter().map(|i| (i.id.clone(), i.ground_truth.unwrap())).collect();
    let body = json!({
        "items_jsonl": write_items_jsonl(&items),
        "similarities": sims,
    });
    (body, truth)
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = call(app, Method::POST, "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

/// Answers every pending request from ground truth until done.
async fn finish(app: &Router, id: &str, truth: &HashMap<String, f64>) -> u64 {
    let mut answered = 0;
    loop {
        let (status, next) = call(app, Method::GET, &format!("/v1/sessions/{id}/next"), None).await;
        assert_eq!(status, StatusCode::OK);
        if next["status"] == "done" {
            return answered;
        }
        let req = &next["request"];
        let (l, r) = (req["left"]["id"].as_str().unwrap(), req["right"]["id"].as_str().unwrap());
        let outcome = if truth[l] >= truth[r] { "left_first" } else { "right_first" };
        let (status, ack) = call(
            app,
            Method::POST,
            &format!("/v1/sessions/{id}/judgments"),
            Some(json!({"request_id": req["request_id"], "outcome": outcome})),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{ack}");
        answered += 1;
    }
}

#[tokio::test]
async fn health_probe() {
    let tmp = tempfile::tempdir().unwrap();
    let (status, v) = call(&app(tmp.path()), Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn create_fresh_session() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (body, _) = payload(30, 1);
    let (status, v) = call(&app, Method::POST, "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["stats"]["status"], "active");
    let id = v["session_id"].as_str().unwrap();
    let (_, stats) = call(&app, Method::GET, &format!("/v1/sessions/{id}/stats"), None).await;
    assert_eq!(stats["human"], 0);
    assert!(stats["auto"].as_u64().is_some());
    assert!(tmp.path().join(id).join("config.json").is_file());
    assert!(tmp.path().join(id).join("events.log").is_file());
    assert!(tmp.path().join(id).join("snapshot.json").is_file());
}

#[tokio::test]
async fn next_is_idempotent_and_duplicates_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (body, _) = payload(12, 2);
    let id = create(&app, body).await;
    let uri = format!("/v1/sessions/{id}/next");
    let (_, a) = call(&app, Method::GET, &uri, None).await;
    let (_, b) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(a["status"], "pending");
    assert_eq!(a, b);
    let rid = a["request"]["request_id"].clone();
    assert!(a["request"]["left"]["image_url"].as_str().unwrap().ends_with("/image"));

    let judge = format!("/v1/sessions/{id}/judgments");
    let (status, ack) = call(&app, Method::POST, &judge, Some(json!({"request_id": rid, "outcome": "equal"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["accepted"], true);
    assert_eq!(ack["stats"]["human"], 1);
    assert_ne!(ack["stats"]["pending_request_id"], rid);

    let (status, err) = call(&app, Method::POST, &judge, Some(json!({"request_id": rid, "outcome": "left_first"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "stale_request");
    assert!(err["message"].is_string());
    let (_, stats) = call(&app, Method::GET, &format!("/v1/sessions/{id}/stats"), None).await;
    assert_eq!(stats["human"], 1);

    let (status, err) = call(&app, Method::POST, &judge, Some(json!({"request_id": 1, "outcome": "sideways"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "invalid_body");
}

#[tokio::test]
async fn completed_session_ranks_and_reports_done() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (body, truth) = payload(20, 3);
    let id = create(&app, body).await;

    let (status, err) = call(&app, Method::GET, &format!("/v1/sessions/{id}/ranking"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "invalid_state");

    finish(&app, &id, &truth).await;
    let (_, next) = call(&app, Method::GET, &format!("/v1/sessions/{id}/next"), None).await;
    assert_eq!(next["status"], "done");
    assert_eq!(next["ranking_url"], format!("/v1/sessions/{id}/ranking"));

    let (status, ranking) = call(&app, Method::GET, &format!("/v1/sessions/{id}/ranking"), None).await;
    assert_eq!(status, StatusCode::OK);
    let rows = ranking["ranking"].as_array().unwrap();
    assert_eq!(rows.len(), 20);
    let values: Vec<f64> = rows.iter().map(|r| truth[r["item_id"].as_str().unwrap()]).collect();
    assert!(values.windows(2).all(|w| w[0] > w[1]), "ranking follows truth");
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r["rank"], i as u64 + 1);
        assert!(r["rating"].is_f64());
        assert!(r["bucket"].is_u64());
        assert!(r["display_ref"].is_string());
    }
    let (_, stats) = call(&app, Method::GET, &format!("/v1/sessions/{id}/stats"), None).await;
    assert_eq!(stats["status"], "completed");
    assert_eq!(stats["progress"], 1.0);
}

#[tokio::test]
async fn two_item_session() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (body, truth) = payload(2, 4);
    let id = create(&app, body).await;
    finish(&app, &id, &truth).await;
    let (_, ranking) = call(&app, Method::GET, &format!("/v1/sessions/{id}/ranking"), None).await;
    assert_eq!(ranking["ranking"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn malformed_inputs_are_rejected_with_details() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (mut body, _) = payload(5, 5);
    let victim = body["similarities"]["items"].as_object().unwrap().keys().next().unwrap().clone();
    body["similarities"]["items"].as_object_mut().unwrap().remove(&victim);
    let (status, err) = call(&app, Method::POST, "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "unknown_items");
    assert_eq!(err["details"]["item_ids"], json!([victim]));

    let (mut body, _) = payload(5, 5);
    let dup = body["items_jsonl"].as_str().unwrap().lines().next().unwrap().to_string();
    body["items_jsonl"] = json!(format!("{}{}\n", body["items_jsonl"].as_str().unwrap(), dup));
    let (status, err) = call(&app, Method::POST, "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["message"].as_str().unwrap().contains("duplicate"));
    assert_eq!(err["details"]["line"], 6);

    let (mut body, _) = payload(5, 5);
    body["similarities"]["tau"] = json!("warm");
    let (status, err) = call(&app, Method::POST, "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["details"]["field"], "tau");

    let (status, err) = call(&app, Method::POST, "/v1/sessions", Some(json!({"items_jsonl": ""}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "invalid_body");

    let (status, err) = call(&app, Method::GET, "/v1/sessions/nope/next", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
}

#[tokio::test]
async fn export_import_roundtrip_keeps_stats() {
    let a_dir = tempfile::tempdir().unwrap();
    let b_dir = tempfile::tempdir().unwrap();
    let a = app(a_dir.path());
    let b = app(b_dir.path());
    let (body, truth) = payload(25, 6);
    let id = create(&a, body).await;
    // answer a few, leave the rest pending
    for _ in 0..5 {
        let (_, next) = call(&a, Method::GET, &format!("/v1/sessions/{id}/next"), None).await;
        let req = &next["request"];
        let (l, r) = (req["left"]["id"].as_str().unwrap(), req["right"]["id"].as_str().unwrap());
        let outcome = if truth[l] >= truth[r] { "left_first" } else { "right_first" };
        call(&a, Method::POST, &format!("/v1/sessions/{id}/judgments"), Some(json!({"request_id": req["request_id"], "outcome": outcome}))).await;
    }
    let (status, bundle) = call(&a, Method::GET, &format!("/v1/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bundle["format"], "ezsort-export/1");

    let (status, imported) = call(&b, Method::POST, "/v1/sessions/import", Some(bundle.clone())).await;
    assert_eq!(status, StatusCode::CREATED, "{imported}");
    assert_eq!(imported["session_id"], id.as_str());
    let (_, sa) = call(&a, Method::GET, &format!("/v1/sessions/{id}/stats"), None).await;
    let (_, sb) = call(&b, Method::GET, &format!("/v1/sessions/{id}/stats"), None).await;
    assert_eq!(sa, sb);
    let (_, na) = call(&a, Method::GET, &format!("/v1/sessions/{id}/next"), None).await;
    let (_, nb) = call(&b, Method::GET, &format!("/v1/sessions/{id}/next"), None).await;
    assert_eq!(na, nb);

    let (status, err) = call(&b, Method::POST, "/v1/sessions/import", Some(bundle.clone())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "already_exists");

    let mut tampered = bundle;
    tampered["inputs"]["session_id"] = json!("other");
    let events = tampered["events"].as_array_mut().unwrap();
    let judged = events.iter_mut().find(|e| e["type"] == "judgment_received" && e["source"] == "human").unwrap();
    judged["outcome"] = json!(if judged["outcome"] == "left_first" { "right_first" } else { "left_first" });
    let (status, err) = call(&b, Method::POST, "/v1/sessions/import", Some(tampered)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "replay_divergence");
}

#[tokio::test]
async fn sessions_survive_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let (body, truth) = payload(15, 7);
    let (id, before) = {
        let a = app(tmp.path());
        let id = create(&a, body).await;
        let (_, next) = call(&a, Method::GET, &format!("/v1/sessions/{id}/next"), None).await;
        let req = &next["request"];
        let (l, r) = (req["left"]["id"].as_str().unwrap(), req["right"]["id"].as_str().unwrap());
        let outcome = if truth[l] >= truth[r] { "left_first" } else { "right_first" };
        call(&a, Method::POST, &format!("/v1/sessions/{id}/judgments"), Some(json!({"request_id": req["request_id"], "outcome": outcome}))).await;
        let (_, stats) = call(&a, Method::GET, &format!("/v1/sessions/{id}/stats"), None).await;
        (id, stats)
    };
    let b = app(tmp.path());
    let (_, list) = call(&b, Method::GET, "/v1/sessions", None).await;
    assert_eq!(list["sessions"], json!([id]));
    let (_, after) = call(&b, Method::GET, &format!("/v1/sessions/{id}/stats"), None).await;
    assert_eq!(before, after);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_duplicate_posts_apply_once() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (body, _) = payload(40, 8);
    let id = create(&app, body).await;
    for _ in 0..5 {
        let (_, next) = call(&app, Method::GET, &format!("/v1/sessions/{id}/next"), None).await;
        let rid = next["request"]["request_id"].clone();
        let (_, before) = call(&app, Method::GET, &format!("/v1/sessions/{id}/stats"), None).await;
        let mut tasks = Vec::new();
        for _ in 0..8 {
            let app = app.clone();
            let uri = format!("/v1/sessions/{id}/judgments");
            let body = json!({"request_id": rid, "outcome": "left_first"});
            tasks.push(tokio::spawn(async move { call(&app, Method::POST, &uri, Some(body)).await.0 }));
        }
        let mut ok = 0;
        for t in tasks {
            match t.await.unwrap() {
                StatusCode::OK => ok += 1,
                StatusCode::CONFLICT => {}
                other => panic!("unexpected status {other}"),
            }
        }
        assert_eq!(ok, 1);
        let (_, after) = call(&app, Method::GET, &format!("/v1/sessions/{id}/stats"), None).await;
        assert_eq!(after["human"].as_u64().unwrap(), before["human"].as_u64().unwrap() + 1);
    }
}

#[tokio::test]
async fn images_are_served_or_redirected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("images")).unwrap();
    std::fs::write(tmp.path().join("images/a.png"), b"\x89PNG fake").unwrap();
    let app = app(tmp.path());
    let items = vec![
        ItemRecord::new("a", "a.png", Some(1.0)),
        ItemRecord::new("b", "https://example.org/b.jpg", Some(2.0)),
        ItemRecord::new("c", "missing.png", Some(3.0)),
        ItemRecord::new("d", "../escape.png", Some(4.0)),
    ];
    let sims = synthesize_similarities(&items, &SyntheticPreorderConfig::default()).unwrap();
    let id = create(&app, json!({"items_jsonl": write_items_jsonl(&items), "similarities": sims})).await;

    let (status, headers, bytes) = call_raw(&app, Method::GET, &format!("/v1/sessions/{id}/items/a/image"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    assert_eq!(bytes, b"\x89PNG fake");

    let (status, headers, _) = call_raw(&app, Method::GET, &format!("/v1/sessions/{id}/items/b/image"), None).await;
    assert_eq!(status, StatusCode::TEMPORARY_REDIRECT);
    assert_eq!(headers[header::LOCATION], "https://example.org/b.jpg");

    let (status, _) = call(&app, Method::GET, &format!("/v1/sessions/{id}/items/c/image"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, &format!("/v1/sessions/{id}/items/d/image"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::GET, &format!("/v1/sessions/{id}/items/zzz/image"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cors_allowlist() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let preflight = |origin: &str| {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/v1/sessions")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .body(Body::empty())
            .unwrap()
    };
    let ok = app.clone().oneshot(preflight(ORIGIN)).await.unwrap();
    assert_eq!(ok.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], ORIGIN);
    let denied = app.clone().oneshot(preflight("http://evil.example")).await.unwrap();
    assert!(denied.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}
