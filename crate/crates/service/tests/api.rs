use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use motifsmith_core::exec::ObjectTrace;
use motifsmith_core::scene::{Arrangement, Vec3};
use motifsmith_service::{router, AppState, BackendConfig, ExecutorConfig, ServiceConfig};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn golden() -> Arrangement {
    Arrangement::load(&fixtures().join("golden/seven_plates.json")).unwrap()
}

fn state(library: &Path) -> AppState {
    let cfg = ServiceConfig {
        library: library.to_path_buf(),
        backend: BackendConfig::Replay {
            fixtures: fixtures().join("llm"),
        },
        executor: ExecutorConfig::Fixtures {
            dir: fixtures().join("traces"),
        },
        ..ServiceConfig::default()
    };
    AppState::new(cfg).unwrap()
}

async fn call(state: &AppState, method: &str, path: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn post(state: &AppState, path: &str, body: Value) -> (StatusCode, Value) {
    call(state, "POST", path, Some(body.to_string())).await
}

#[tokio::test]
async fn health_reports_backend() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = call(&state(dir.path()), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["backend"], "replay");
}

#[tokio::test]
async fn learn_then_generate() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, learned) = post(&s, "/v1/learn", json!({ "arrangement": golden() })).await;
    assert_eq!(status, StatusCode::OK, "{learned}");
    assert_eq!(learned["motif_type"], "stack");
    assert_eq!(learned["meta"]["function_name"], "create_stack");
    assert_eq!(learned["rewrite_iterations"], 1);
    assert_eq!(learned["meta_iterations"], 1);

    let (status, out) = post(
        &s,
        "/v1/generate",
        json!({
            "description": "a stack of four books",
            "assets": fixtures().join("assets/manifest.jsonl"),
            "merged_mesh": true,
        }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{out}");
    let objs = out["arrangement"]["objects"].as_array().unwrap();
    assert_eq!(objs.len(), 4);
    let ys: Vec<f64> = objs.iter().map(|o| o["position"][1].as_f64().unwrap()).collect();
    assert!(ys.windows(2).all(|w| w[1] > w[0]), "{ys:?}");
    assert_eq!(out["merged_obj"].as_str().unwrap().matches("\no ").count(), 4);
    assert_eq!(out["touch"], true);
}

#[tokio::test]
async fn generate_without_meta_program_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = post(
        &state(dir.path()),
        "/v1/generate",
        json!({"description": "a stack of four books"}),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["kind"], "no_meta_program");
    assert_eq!(body["error"]["stage"], "retrieve");
}

#[tokio::test]
async fn unrecorded_conversation_names_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = post(
        &state(dir.path()),
        "/v1/classify",
        json!({"description": "a row of chairs"}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["error"]["kind"], "missing_fixture");
    assert_eq!(body["error"]["stage"], "classify");
    assert!(body["error"]["message"].as_str().unwrap().contains("digest"));
}

#[tokio::test]
async fn classify_recorded_description() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = post(
        &state(dir.path()),
        "/v1/classify",
        json!({"description": "a stack of four books"}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["motif_type"], "stack");
    assert_eq!(body["report"]["llm_calls"], 1);
}

#[tokio::test]
async fn malformed_bodies_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, body) = call(&s, "POST", "/v1/learn", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "invalid_request");
    let (status, body) = post(&s, "/v1/learn", json!({"arrangement": {"description": "x"}})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "invalid_request");
}

#[tokio::test]
async fn validate_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let arrangement = golden();
    let same = ObjectTrace::from_objects(&arrangement.objects);
    let (status, body) = post(&s, "/v1/validate", json!({"arrangement": arrangement, "trace": same})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["passed"], true);

    let mut shifted = arrangement.objects.clone();
    shifted[2].position += Vec3::new(0.1, 0.0, 0.0);
    let trace = ObjectTrace::from_objects(&shifted);
    let (_, body) = post(&s, "/v1/validate", json!({"arrangement": arrangement, "trace": trace})).await;
    assert_eq!(body["passed"], false);

    let (status, body) = post(&s, "/v1/validate", json!({"arrangement": arrangement})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "invalid_argument");

    let (status, body) = post(
        &s,
        "/v1/validate",
        json!({"arrangement": arrangement, "program": "objs = []"}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_GATEWAY, "{body}");
    assert_eq!(body["error"]["kind"], "executor");
}

#[tokio::test]
async fn index_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let manifest = fixtures().join("assets/manifest.jsonl");
    let (status, body) = post(&s, "/v1/assets/index", json!({ "manifest": manifest })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["count"], 8);
    assert_eq!(body["labels"]["book"], 6);
    assert!(body["warnings"].as_array().unwrap().is_empty());

    let (status, body) = post(
        &s,
        "/v1/assets/index",
        json!({"manifest": dir.path().join("nope.jsonl")}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "assets");

    let (status, body) = post(&s, "/v1/export", json!({"arrangement": golden()})).await;
    assert_eq!(status, StatusCode::OK);
    let obj = body["obj"].as_str().unwrap();
    assert_eq!(obj.matches("\no ").count(), 7);
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 7 * 8);
}
