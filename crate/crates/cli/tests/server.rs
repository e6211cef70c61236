use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use http_body_util::BodyExt;
use latent_lexicon::corpus::{CleanedAnnotation, RawAnnotation};
use latent_lexicon::directions::DirectionRecord;
use latent_lexicon::generator::SyntheticWorld;
use latent_lexicon::io;
use latent_lexicon::pipeline::random_records;
use latent_lexicon_cli::server::{router, AppState, TaskPayload, TaskQueue};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

fn setup(tasks: usize, target: usize, dir: &Path) -> (Router, Vec<DirectionRecord>) {
    let world = SyntheticWorld::build(Default::default()).unwrap();
    let records = random_records(&world, 0, 1, tasks, 7);
    let state = AppState::new(
        world,
        6.0,
        TaskQueue::new(records.clone(), target),
        dir.join("raw.jsonl"),
    );
    (router(Arc::new(state)), records)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

fn get(path: &str) -> Request<Body> {
    Request::get(path).body(Body::empty()).unwrap()
}

fn post_json(body: &str) -> Request<Body> {
    Request::post("/api/annotation")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn submission(task: &str, annotator: &str, text: &str) -> String {
    json!({ "task_id": task, "annotator_id": annotator, "text": text }).to_string()
}

fn raw_corpus(dir: &Path) -> Vec<RawAnnotation> {
    let p = dir.join("raw.jsonl");
    if p.exists() {
        io::read_jsonl(&p).unwrap()
    } else {
        Vec::new()
    }
}

#[tokio::test]
async fn empty_queue_returns_no_content() {
    let tmp = TempDir::new().unwrap();
    let (app, _) = setup(0, 1, tmp.path());
    let (status, body) = send(&app, get("/api/task")).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert!(body.is_empty());
}

#[tokio::test]
async fn task_payload_carries_two_png_images() {
    let tmp = TempDir::new().unwrap();
    let (app, records) = setup(1, 1, tmp.path());
    let (status, body) = send(&app, get("/api/task")).await;
    assert_eq!(status, StatusCode::OK);
    let task: TaskPayload = serde_json::from_slice(&body).unwrap();
    assert_eq!(task.task_id, records[0].id);
    assert_eq!(task.class, records[0].class);
    for img in [&task.before_image, &task.after_image] {
        let bytes = STANDARD.decode(img).unwrap();
        assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    }
    assert_ne!(task.before_image, task.after_image);
}

#[tokio::test]
async fn tasks_are_served_at_most_the_assignment_target() {
    let tmp = TempDir::new().unwrap();
    let (app, records) = setup(2, 2, tmp.path());
    let mut ids = Vec::new();
    for _ in 0..4 {
        let (status, body) = send(&app, get("/api/task")).await;
        assert_eq!(status, StatusCode::OK);
        ids.push(serde_json::from_slice::<TaskPayload>(&body).unwrap().task_id);
    }
    let expected = [0, 0, 1, 1].map(|i| records[i].id.clone());
    assert_eq!(ids, expected);
    assert_eq!(send(&app, get("/api/task")).await.0, StatusCode::NO_CONTENT);
}

#[tokio::test]
async fn submission_appends_verbatim_record() {
    let tmp = TempDir::new().unwrap();
    let (app, records) = setup(2, 1, tmp.path());
    let text = "  Moré mountains,\tless \"sunlight\" ☀ ";
    let (status, _) = send(&app, post_json(&submission(&records[1].id, "w1", text))).await;
    assert_eq!(status, StatusCode::OK);
    let corpus = raw_corpus(tmp.path());
    assert_eq!(corpus.len(), 1);
    assert_eq!(corpus[0].text, text);
    assert_eq!(corpus[0].direction_id, records[1].id);
    assert_eq!(corpus[0].annotator_id, "w1");
    assert_eq!(corpus[0].class, records[1].class);
    assert_eq!(corpus[0].alpha, 6.0);
}

#[tokio::test]
async fn submissions_beyond_target_or_for_unknown_tasks_conflict() {
    let tmp = TempDir::new().unwrap();
    let (app, records) = setup(1, 1, tmp.path());
    let id = &records[0].id;
    assert_eq!(send(&app, post_json(&submission(id, "a", "more trees"))).await.0, StatusCode::OK);
    assert_eq!(
        send(&app, post_json(&submission(id, "b", "more trees"))).await.0,
        StatusCode::CONFLICT
    );
    assert_eq!(
        send(&app, post_json(&submission("nope", "a", "more trees"))).await.0,
        StatusCode::CONFLICT
    );
    assert_eq!(raw_corpus(tmp.path()).len(), 1);
    // A completed task is never handed out again.
    assert_eq!(send(&app, get("/api/task")).await.0, StatusCode::NO_CONTENT);
}

#[tokio::test]
async fn malformed_bodies_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let (app, records) = setup(1, 1, tmp.path());
    for body in [
        "not json".to_string(),
        json!({ "task_id": records[0].id }).to_string(),
        json!({ "task_id": 3, "annotator_id": "a", "text": "x" }).to_string(),
        submission(&records[0].id, "a", "   "),
        submission(&records[0].id, "", "more trees"),
    ] {
        let (status, body) = send(&app, post_json(&body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{}", String::from_utf8_lossy(&body));
    }
    assert!(raw_corpus(tmp.path()).is_empty());
}

#[tokio::test]
async fn progress_counts_served_and_completed() {
    let tmp = TempDir::new().unwrap();
    let (app, records) = setup(3, 1, tmp.path());
    send(&app, get("/api/task")).await;
    send(&app, post_json(&submission(&records[0].id, "a", "more trees"))).await;
    send(&app, post_json(&submission(&records[2].id, "a", "less snow"))).await;
    let (status, body) = send(&app, get("/api/progress")).await;
    assert_eq!(status, StatusCode::OK);
    let p: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(p["tasks"], 3);
    assert_eq!(p["completed"], 2);
    assert_eq!(p["served"], 2);
    assert_eq!(p["remaining"], 1);
}

#[tokio::test]
async fn index_page_is_served() {
    let tmp = TempDir::new().unwrap();
    let (app, _) = setup(1, 1, tmp.path());
    let (status, body) = send(&app, get("/")).await;
    assert_eq!(status, StatusCode::OK);
    let html = String::from_utf8(body).unwrap();
    assert!(html.contains("/api/task") && html.contains("/api/annotation"));
}

#[tokio::test]
async fn posted_annotations_flow_through_clean() {
    let tmp = TempDir::new().unwrap();
    let (app, records) = setup(3, 1, tmp.path());
    let texts = ["more mountains", "The sky is less reddish", "fewer peopel, more buildings"];
    for (r, text) in records.iter().zip(texts) {
        let (status, _) = send(&app, get("/api/task")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(send(&app, post_json(&submission(&r.id, "human", text))).await.0, StatusCode::OK);
    }
    let out = tmp.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::copy(tmp.path().join("raw.jsonl"), out.join("raw.jsonl")).unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_latent-lexicon"))
        .args(["clean", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let cleaned: Vec<CleanedAnnotation> = io::read_jsonl(&out.join("cleaned.jsonl")).unwrap();
    assert_eq!(cleaned.len(), 3);
    let tokens: Vec<Vec<(String, i8)>> = cleaned
        .iter()
        .map(|c| c.tokens.iter().map(|t| (t.token.clone(), t.sign)).collect())
        .collect();
    assert_eq!(tokens[0], [("mountain".to_string(), 1)]);
    assert!(tokens[1].contains(&("reddish".to_string(), -1)));
    assert!(tokens[2].contains(&("people".to_string(), -1)));
    assert!(tokens[2].contains(&("building".to_string(), 1)));
}
