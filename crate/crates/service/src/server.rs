//! HTTP and WebSocket front end.
//!
//! Routes:
//! - `GET /ws`: WebSocket; one JSON [`ClientMessage`] per text frame in, one
//!   [`ServerMessage`] per frame out.
//! - `GET /stems/manifest`: the exported manifest (also at
//!   `/stems/manifest.toml`).
//! - `GET /stems/<instrument>.wav`: one exported stem.
//! - `GET /health`
//! - anything else: static UI assets, when a UI directory is configured.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use tiltmix_core::stems::{stem_file_name, MANIFEST_FILE};
use tiltmix_core::InstrumentId;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::protocol::{ClientMessage, ErrorCode, ServerMessage};
use crate::session::Sessions;

#[derive(Debug, Clone)]
pub struct AppState {
    pub sessions: Arc<Sessions>,
    pub stems_dir: PathBuf,
}

impl AppState {
    pub fn new(sessions: Sessions, stems_dir: impl Into<PathBuf>) -> Self {
        Self {
            sessions: Arc::new(sessions),
            stems_dir: stems_dir.into(),
        }
    }
}

pub fn router(state: AppState, ui_dir: Option<&Path>) -> Router {
    let app = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/stems/{file}", get(stem_file))
        .route("/health", get(|| async { "ok" }))
        .with_state(state);
    match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Serves until the listener fails. Idle sessions are swept once per second
/// in addition to the per-connection receive timeout.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    ui_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let sessions = state.sessions.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(1));
        loop {
            tick.tick().await;
            for id in sessions.expire_idle(Instant::now()) {
                tracing::info!(session = %id, "session expired");
            }
        }
    });
    axum::serve(listener, router(state, ui_dir.as_deref())).await
}

fn not_found(what: &str) -> Response {
    (StatusCode::NOT_FOUND, format!("not found: {what}\n")).into_response()
}

async fn stem_file(State(state): State<AppState>, UrlPath(file): UrlPath<String>) -> Response {
    let (name, content_type) = if file == "manifest" || file == MANIFEST_FILE {
        (MANIFEST_FILE.to_string(), "text/plain; charset=utf-8")
    } else {
        match file.strip_suffix(".wav").and_then(InstrumentId::from_name) {
            Some(id) => (stem_file_name(id), "audio/wav"),
            None => return not_found(&file),
        }
    };
    match tokio::fs::read(state.stems_dir.join(&name)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type)], bytes).into_response(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => not_found(&name),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| run_session(socket, state.sessions))
}

async fn run_session(mut socket: WebSocket, sessions: Arc<Sessions>) {
    let (id, session) = sessions.open(Instant::now());
    tracing::info!(session = %id, "session opened");
    loop {
        let frame = match tokio::time::timeout(sessions.timeout(), socket.recv()).await {
            Err(_) => {
                tracing::info!(session = %id, "idle timeout");
                break;
            }
            Ok(None) | Ok(Some(Err(_))) => break,
            Ok(Some(Ok(frame))) => frame,
        };
        let reply = match frame {
            Message::Text(text) => match ClientMessage::from_json(text.as_str()) {
                Ok(msg) => session.lock().handle(msg, Instant::now()),
                Err(e) => ServerMessage::error(ErrorCode::BadMessage, e.to_string()),
            },
            Message::Binary(_) => {
                ServerMessage::error(ErrorCode::BadMessage, "expected a text frame")
            }
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        if socket
            .send(Message::Text(reply.to_json().into()))
            .await
            .is_err()
        {
            break;
        }
    }
    sessions.close(&id);
    tracing::info!(session = %id, "session closed");
}
