//! HTTP endpoints and the per-connection frame stream.

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sanvaad::content::{
    build_bundle, resolve_language, ContentBundle, ContentRequest, ExtractiveSummarizer, NewsStore,
    PlanningSynthesizer,
};
use sanvaad::signplan::{load_dictionary, PhraseDictionary, SignPlan};
use sanvaad::{load_model, Error as CoreError, ResidualMlpModel};
use tokio::sync::mpsc;

use crate::config::ServiceConfig;
use crate::messages::{
    ContentQuery, DropNotice, ErrorMessage, FrameMessage, HealthResponse, ModelInfo,
    PredictionMessage, StreamReply, TranslateRequest,
};
use crate::ServiceError;

/// Read-only state shared by every request.
#[derive(Debug)]
pub struct AppState {
    pub model: ResidualMlpModel,
    pub dictionary: PhraseDictionary,
    pub store: NewsStore,
    pub top_k: usize,
    pub max_message_bytes: usize,
    pub queue_capacity: usize,
}

impl AppState {
    pub fn new(model: ResidualMlpModel, dictionary: PhraseDictionary, store: NewsStore) -> Self {
        let defaults = ServiceConfig::default();
        Self {
            model,
            dictionary,
            store,
            top_k: defaults.top_k,
            max_message_bytes: defaults.max_message_bytes,
            queue_capacity: defaults.queue_capacity,
        }
    }

    /// Loads every artifact the config names. Errors carry the offending path.
    pub fn load(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        cfg.validate()?;
        let load_err = |what: &'static str, path: &std::path::Path| {
            let path = path.to_path_buf();
            move |source: CoreError| ServiceError::Load { what, path, source }
        };
        let model = load_model(&cfg.model).map_err(load_err("model", &cfg.model))?;
        let mut dictionary =
            load_dictionary(&cfg.dictionary).map_err(load_err("dictionary", &cfg.dictionary))?;
        if let Some(stops) = &cfg.stop_keywords {
            dictionary = dictionary.with_stop_keywords(stops);
        }
        let store = NewsStore::load_dir(&cfg.store_dir).map_err(load_err("news store", &cfg.store_dir))?;
        Ok(Self {
            model,
            dictionary,
            store,
            top_k: cfg.top_k,
            max_message_bytes: cfg.max_message_bytes,
            queue_capacity: cfg.queue_capacity,
        })
    }

    /// The library prediction for one frame, as a wire message.
    pub fn classify(&self, msg: &FrameMessage) -> Result<PredictionMessage, ErrorMessage> {
        let frame = msg.frame();
        let fail = |error: String| ErrorMessage {
            seq: Some(msg.seq),
            error,
        };
        frame.validate().map_err(|e| fail(describe(&e)))?;
        self.model
            .predict(&frame, self.top_k)
            .map(|p| PredictionMessage::new(msg.seq, &p))
            .map_err(|e| fail(describe(&e)))
    }

    pub fn translate(&self, text: &str) -> SignPlan {
        self.dictionary.translate(text)
    }

    pub fn content(&self, q: &ContentQuery) -> ContentBundle {
        let request = ContentRequest {
            language: resolve_language(q.lang.as_deref().unwrap_or("english")),
            topic: q.topic.clone(),
        };
        build_bundle(&self.store, &request, &ExtractiveSummarizer, &PlanningSynthesizer)
    }

    pub fn health(&self) -> HealthResponse {
        let net = &self.model.network;
        HealthResponse {
            status: "ok".into(),
            model: ModelInfo {
                classes: self.model.codec.len(),
                input_dim: net.spec.input_dim,
                width: net.spec.width,
                residual_blocks: net.spec.residual_blocks,
                residual: net.spec.residual,
                parameters: net.parameter_count(),
                training: self.model.metadata,
            },
            phrases: self.dictionary.len(),
            languages: self.store.languages(),
        }
    }
}

fn describe(e: &CoreError) -> String {
    match e {
        CoreError::NoHands => "no hands".into(),
        other => other.to_string(),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.max_message_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/classify", post(classify))
        .route("/translate", post(translate))
        .route("/content", get(content))
        .route("/stream", get(stream))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

struct ApiError(StatusCode, ErrorMessage);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(state.health())
}

async fn classify(
    State(state): State<Arc<AppState>>,
    Json(msg): Json<FrameMessage>,
) -> Result<Json<PredictionMessage>, ApiError> {
    let result = tokio::task::spawn_blocking(move || state.classify(&msg))
        .await
        .map_err(|e| {
            ApiError(
                StatusCode::INTERNAL_SERVER_ERROR,
                ErrorMessage { seq: None, error: e.to_string() },
            )
        })?;
    result
        .map(Json)
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e))
}

async fn translate(State(state): State<Arc<AppState>>, Json(req): Json<TranslateRequest>) -> Json<SignPlan> {
    Json(state.translate(&req.text))
}

async fn content(State(state): State<Arc<AppState>>, Query(q): Query<ContentQuery>) -> Json<ContentBundle> {
    Json(state.content(&q))
}

async fn stream(State(state): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    // protocol-level cap well above the application limit, so oversized
    // messages get a readable rejection instead of a dropped connection
    let hard_cap = state.max_message_bytes.saturating_mul(4).max(1 << 16);
    ws.max_message_size(hard_cap)
        .on_upgrade(move |socket| handle_stream(socket, state))
}

enum Work {
    Frame(Box<FrameMessage>),
    Reply(StreamReply),
}

/// Serves one stream connection.
///
/// A reader parses incoming messages into a bounded work queue; a worker
/// answers them in arrival order. When the queue is full the frame is
/// answered immediately with a drop notice.
pub async fn handle_stream(socket: WebSocket, state: Arc<AppState>) {
    use futures_util::{SinkExt, StreamExt};

    let (mut sink, mut source) = socket.split();
    let cap = state.queue_capacity;
    let (work_tx, mut work_rx) = mpsc::channel::<Work>(cap);
    let (out_tx, mut out_rx) = mpsc::channel::<StreamReply>(cap + 8);

    let writer = tokio::spawn(async move {
        while let Some(reply) = out_rx.recv().await {
            let text = serde_json::to_string(&reply).expect("replies serialize");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    let worker_out = out_tx.clone();
    let worker_state = state.clone();
    let worker = tokio::spawn(async move {
        while let Some(work) = work_rx.recv().await {
            let reply = match work {
                Work::Reply(r) => r,
                Work::Frame(msg) => {
                    let s = worker_state.clone();
                    match tokio::task::spawn_blocking(move || s.classify(&msg)).await {
                        Ok(Ok(p)) => StreamReply::Prediction(p),
                        Ok(Err(e)) => StreamReply::Error(e),
                        Err(e) => StreamReply::Error(ErrorMessage { seq: None, error: e.to_string() }),
                    }
                }
            };
            if worker_out.send(reply).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(msg)) = source.next().await {
        let work = match msg {
            Message::Text(text) => parse_frame(text.as_str(), state.max_message_bytes),
            Message::Binary(bytes) => Work::Reply(StreamReply::Error(ErrorMessage {
                seq: None,
                error: format!("binary messages are not supported ({} bytes); send JSON text", bytes.len()),
            })),
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        match work_tx.try_send(work) {
            Ok(()) => {}
            Err(mpsc::error::TrySendError::Full(work)) => {
                let seq = match &work {
                    Work::Frame(f) => Some(f.seq),
                    Work::Reply(StreamReply::Error(e)) => e.seq,
                    Work::Reply(_) => None,
                };
                let notice = StreamReply::Dropped(DropNotice {
                    seq,
                    reason: format!("{cap} frames already waiting on this connection"),
                });
                if out_tx.send(notice).await.is_err() {
                    break;
                }
            }
            Err(mpsc::error::TrySendError::Closed(_)) => break,
        }
    }
    drop(work_tx);
    drop(out_tx);
    let _ = worker.await;
    let _ = writer.await;
}

fn parse_frame(text: &str, limit: usize) -> Work {
    let seq_hint = || {
        serde_json::from_str::<serde_json::Value>(text)
            .ok()
            .and_then(|v| v.get("seq").and_then(serde_json::Value::as_u64))
    };
    if text.len() > limit {
        return Work::Reply(StreamReply::Error(ErrorMessage {
            seq: None,
            error: format!("message too large: {} bytes exceeds the {limit} byte limit", text.len()),
        }));
    }
    match serde_json::from_str::<FrameMessage>(text) {
        Ok(frame) => Work::Frame(Box::new(frame)),
        Err(e) => Work::Reply(StreamReply::Error(ErrorMessage {
            seq: seq_hint(),
            error: format!("malformed frame: {e}"),
        })),
    }
}
