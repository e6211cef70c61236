//! Local annotation service: hands out before/after pairs and appends the
//! submitted descriptions to a raw-corpus file in the oracle's format.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use latent_lexicon::corpus::RawAnnotation;
use latent_lexicon::directions::DirectionRecord;
use latent_lexicon::distill::apply_direction;
use latent_lexicon::generator::{ImageBuffer, SyntheticWorld};
use latent_lexicon::io;
use serde::{Deserialize, Serialize};
use serde_json::json;

const INDEX_HTML: &str = include_str!("index.html");

#[derive(Debug, Clone, Default)]
struct TaskState {
    served: usize,
    completed: usize,
}

/// Tasks in direction-file order. A task is handed out at most
/// `target` times and accepts at most `target` annotations.
#[derive(Debug)]
pub struct TaskQueue {
    records: Vec<DirectionRecord>,
    state: Vec<TaskState>,
    target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub tasks: usize,
    pub assignments_per_task: usize,
    pub served: usize,
    pub completed: usize,
    pub remaining: usize,
}

impl TaskQueue {
    pub fn new(records: Vec<DirectionRecord>, target: usize) -> Self {
        let state = vec![TaskState::default(); records.len()];
        Self {
            records,
            state,
            target: target.max(1),
        }
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    /// Next task with assignments left, marking it served.
    pub fn checkout(&mut self) -> Option<&DirectionRecord> {
        let i = self.state.iter().position(|s| s.served < self.target)?;
        self.state[i].served += 1;
        Some(&self.records[i])
    }

    /// Records one completion; `None` for unknown or exhausted tasks.
    pub fn complete(&mut self, id: &str) -> Option<&DirectionRecord> {
        let i = self.position(id)?;
        if self.state[i].completed >= self.target {
            return None;
        }
        self.state[i].completed += 1;
        self.state[i].served = self.state[i].served.max(self.state[i].completed);
        Some(&self.records[i])
    }

    fn revert(&mut self, id: &str) {
        if let Some(i) = self.position(id) {
            self.state[i].completed = self.state[i].completed.saturating_sub(1);
        }
    }

    pub fn progress(&self) -> Progress {
        let total = self.records.len() * self.target;
        let completed = self.state.iter().map(|s| s.completed).sum();
        Progress {
            tasks: self.records.len(),
            assignments_per_task: self.target,
            served: self.state.iter().map(|s| s.served).sum(),
            completed,
            remaining: total - completed,
        }
    }
}

pub struct AppState {
    world: SyntheticWorld,
    alpha: f64,
    raw_path: PathBuf,
    // Also the single-writer lock for the corpus file.
    queue: Mutex<TaskQueue>,
}

impl AppState {
    pub fn new(world: SyntheticWorld, alpha: f64, queue: TaskQueue, raw_path: PathBuf) -> Self {
        Self {
            world,
            alpha,
            raw_path,
            queue: Mutex::new(queue),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TaskPayload {
    pub task_id: String,
    pub class: String,
    pub image_format: String,
    /// Base64 PNG of the original image (left).
    pub before_image: String,
    /// Base64 PNG of the transformed image (right).
    pub after_image: String,
}

#[derive(Debug, Deserialize)]
struct Submission {
    task_id: String,
    annotator_id: String,
    text: String,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route("/api/task", get(next_task))
        .route("/api/annotation", post(submit))
        .route("/api/progress", get(progress))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, bind: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .with_context(|| format!("binding {bind}"))?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let color = match img.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => anyhow::bail!("cannot encode {c}-channel image as PNG"),
    };
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&img.to_bytes())?;
    writer.finish()?;
    Ok(out)
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

fn payload(state: &AppState, r: &DirectionRecord) -> Result<TaskPayload> {
    let y = state.world.class_index(&r.class)?;
    let before = state.world.render(&r.z, y)?;
    let after = apply_direction(&state.world, &r.z, y, &r.direction(), state.alpha)?;
    Ok(TaskPayload {
        task_id: r.id.clone(),
        class: r.class.clone(),
        image_format: "png".into(),
        before_image: STANDARD.encode(encode_png(&before)?),
        after_image: STANDARD.encode(encode_png(&after)?),
    })
}

async fn next_task(State(state): State<Arc<AppState>>) -> Response {
    let record = {
        let mut q = state.queue.lock().expect("queue lock");
        match q.checkout() {
            Some(r) => r.clone(),
            None => return StatusCode::NO_CONTENT.into_response(),
        }
    };
    match payload(&state, &record) {
        Ok(p) => Json(p).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn submit(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let sub: Submission = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    if sub.text.trim().is_empty() || sub.annotator_id.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "text and annotator_id must be non-empty");
    }
    let mut q = state.queue.lock().expect("queue lock");
    let Some(record) = q.complete(&sub.task_id) else {
        return error(
            StatusCode::CONFLICT,
            format!("task {:?} is unknown or already fully annotated", sub.task_id),
        );
    };
    let task_id = sub.task_id;
    let ann = RawAnnotation {
        direction_id: record.id.clone(),
        annotator_id: sub.annotator_id,
        class: record.class.clone(),
        alpha: state.alpha,
        text: sub.text,
    };
    if let Err(e) = io::append_jsonl(&state.raw_path, &ann) {
        q.revert(&task_id);
        return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    (StatusCode::OK, Json(json!({ "ok": true, "progress": q.progress() }))).into_response()
}

async fn progress(State(state): State<Arc<AppState>>) -> Response {
    let p = state.queue.lock().expect("queue lock").progress();
    ([(header::CACHE_CONTROL, "no-store")], Json(p)).into_response()
}
