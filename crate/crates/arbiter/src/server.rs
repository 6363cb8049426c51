//! HTTP and WebSocket front end. Each socket gets its own session loop task
//! that owns the [`Session`]; the socket reader and writer only exchange
//! messages with it.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use arbiter_core::agent::Agent;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::time::MissedTickBehavior;

use crate::config::RunConfig;
use crate::session::{InputSource, ServerMessage, Session, SessionOptions};

/// Outbound state frames beyond this many are dropped rather than queued.
pub const STATE_QUEUE_DEPTH: usize = 2;
const REPLY_QUEUE_DEPTH: usize = 32;
const INBOX_DEPTH: usize = 64;

#[derive(Clone)]
pub struct AppState {
    config: Arc<RunConfig>,
    agent: Option<Arc<Agent>>,
    source: InputSource,
    sessions: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(config: RunConfig, agent: Option<Agent>, source: InputSource) -> Result<Self, String> {
        config.validate().map_err(|e| e.to_string())?;
        if config.serve.assistance == arbiter_core::evaluation::Assistance::Shared && agent.is_none() {
            return Err("shared assistance needs a checkpoint".into());
        }
        Ok(AppState {
            config: Arc::new(config),
            agent: agent.map(Arc::new),
            source,
            sessions: Arc::new(AtomicU64::new(0)),
        })
    }

    fn new_session(&self) -> Result<Session, String> {
        let n = self.sessions.fetch_add(1, Ordering::Relaxed);
        let c = &self.config;
        let options = SessionOptions {
            settings: c.eval_settings(),
            // every session walks its own episode stream
            seed: arbiter_core::rollout::mix_seed(c.run.seed, 51, n),
            stale_ticks: c.serve.stale_ticks,
            assistance: c.serve.assistance,
            source: self.source,
        };
        Session::new(format!("s{n}"), options, self.agent.clone())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/config", get(config_handler))
        .route("/session", get(ws_handler))
        .with_state(state)
}

/// Binds `addr` and serves until the process stops. Returns the bound
/// address through `on_bound` so callers can use port 0.
pub async fn serve(
    state: AppState,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn config_handler(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.config.as_ref().clone())
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_socket(socket, state))
}

async fn run_socket(socket: WebSocket, state: AppState) {
    let session = match state.new_session() {
        Ok(s) => s,
        Err(reason) => {
            log::error!("cannot open session: {reason}");
            return;
        }
    };
    let id = session.id().to_string();
    log::info!("session {id} connected");
    let (mut sink, mut stream) = socket.split();
    let (in_tx, in_rx) = mpsc::channel::<String>(INBOX_DEPTH);
    let (state_tx, mut state_rx) = mpsc::channel::<String>(STATE_QUEUE_DEPTH);
    let (reply_tx, mut reply_rx) = mpsc::channel::<String>(REPLY_QUEUE_DEPTH);

    let hello = ServerMessage::Hello {
        session: id.clone(),
        mode: session.mode(),
        tick_hz: state.config.serve.tick_hz,
    };
    let _ = reply_tx.try_send(hello.to_json());
    let tick = Duration::from_secs_f64(1.0 / state.config.serve.tick_hz);
    let session_task = tokio::spawn(session_loop(session, in_rx, state_tx, reply_tx.clone(), tick));

    let writer = tokio::spawn(async move {
        loop {
            let text = tokio::select! {
                biased;
                Some(t) = reply_rx.recv() => t,
                Some(t) = state_rx.recv() => t,
                else => break,
            };
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => {
                if in_tx.send(text.to_string()).await.is_err() {
                    break;
                }
            }
            Message::Binary(_) => {
                let err = ServerMessage::Error {
                    session: id.clone(),
                    reason: "binary frames are not supported".into(),
                };
                let _ = reply_tx.try_send(err.to_json());
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    drop(in_tx);
    drop(reply_tx);
    let _ = session_task.await;
    writer.abort();
    log::info!("session {id} closed");
}

async fn session_loop(
    mut session: Session,
    mut inbox: mpsc::Receiver<String>,
    states: mpsc::Sender<String>,
    replies: mpsc::Sender<String>,
    period: Duration,
) {
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            _ = interval.tick() => match session.tick() {
                Some(Ok(frame)) => {
                    // a slow client loses frames instead of stalling the loop
                    let _ = states.try_send(frame.to_json());
                }
                Some(Err(reason)) => {
                    log::error!("session {}: {reason}", session.id());
                    let err = ServerMessage::Error { session: session.id().to_string(), reason };
                    let _ = replies.try_send(err.to_json());
                }
                None => {}
            },
            msg = inbox.recv() => match msg {
                Some(text) => {
                    for out in session.handle_text(&text) {
                        let _ = replies.try_send(out.to_json());
                    }
                }
                None => break,
            },
        }
    }
}
