use std::net::SocketAddr;
use std::time::Duration;

use arbiter::server::{serve, AppState};
use arbiter::session::InputSource;
use arbiter::RunConfig;
use arbiter_core::agent::{Agent, AgentConfig};
use arbiter_core::evaluation::Assistance;
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

async fn start(config: RunConfig, agent: Option<Agent>) -> SocketAddr {
    let state = AppState::new(config, agent, InputSource::Remote).unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel();
    tokio::spawn(serve(state, "127.0.0.1:0".parse().unwrap(), move |a| {
        let _ = tx.send(a);
    }));
    rx.await.unwrap()
}

fn direct() -> RunConfig {
    let mut c = RunConfig::default();
    c.serve.assistance = Assistance::Direct;
    c
}

async fn http_get(addr: SocketAddr, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let text = String::from_utf8(buf).unwrap();
    let status = text[9..12].parse().unwrap();
    let body = text.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

async fn connect(addr: SocketAddr) -> (Socket, String) {
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/session")).await.unwrap();
    let hello = recv(&mut ws).await;
    assert_eq!(hello["type"], "hello");
    let id = hello["session"].as_str().unwrap().to_string();
    (ws, id)
}

async fn recv(ws: &mut Socket) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("server answered in time")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Next message of type `kind`, skipping the others.
async fn recv_kind(ws: &mut Socket, kind: &str) -> Value {
    loop {
        let v = recv(ws).await;
        if v["type"] == kind {
            return v;
        }
    }
}

async fn send(ws: &mut Socket, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

#[tokio::test]
async fn health_and_config_endpoints() {
    let addr = start(direct(), None).await;
    let (status, _) = http_get(addr, "/health").await;
    assert_eq!(status, 200);
    let (status, body) = http_get(addr, "/config").await;
    assert_eq!(status, 200);
    let config: RunConfig = serde_json::from_str(&body).unwrap();
    assert_eq!(config, direct());
}

#[tokio::test]
async fn malformed_messages_get_error_frames() {
    let addr = start(direct(), None).await;
    let (mut ws, id) = connect(addr).await;
    ws.send(Message::Text("{nonsense".into())).await.unwrap();
    let e = recv_kind(&mut ws, "error").await;
    assert_eq!(e["session"], id.as_str());
    assert!(e["reason"].as_str().unwrap().contains("malformed"));
    ws.send(Message::Binary(vec![1, 2, 3].into())).await.unwrap();
    assert_eq!(recv_kind(&mut ws, "error").await["type"], "error");
}

#[tokio::test]
async fn start_then_direct_control_echoes_the_input() {
    let addr = start(direct(), None).await;
    let (mut ws, id) = connect(addr).await;
    send(&mut ws, json!({"type": "control", "command": "start", "goal": 2})).await;
    let first = recv_kind(&mut ws, "state").await;
    assert_eq!(first["session"], id.as_str());
    assert_eq!(first["episode"]["steps"], 0);
    assert_eq!(first["episode"]["true_goal"], 2);
    assert_eq!(first["goals"].as_array().unwrap().len(), 3);

    send(&mut ws, json!({"type": "input", "vx": 0.05, "vy": 0.02})).await;
    loop {
        let s = recv_kind(&mut ws, "state").await;
        if s["user_action"]["x"] == 0.05 {
            assert_eq!(s["arbitrated_action"]["x"], 0.05);
            assert_eq!(s["arbitrated_action"]["y"], 0.02);
            break;
        }
    }
    send(&mut ws, json!({"type": "input", "vx": 3.0, "vy": 4.0})).await;
    loop {
        let s = recv_kind(&mut ws, "state").await;
        if s["user_action"]["x"] == 3.0 {
            let (x, y) = (s["arbitrated_action"]["x"].as_f64().unwrap(), s["arbitrated_action"]["y"].as_f64().unwrap());
            assert!(((x * x + y * y).sqrt() - direct().env.max_speed).abs() < 1e-12);
            break;
        }
    }
}

#[tokio::test]
async fn set_mode_mid_episode_is_rejected() {
    let agent = Agent::new(AgentConfig::default(), 3, RunConfig::default().env.max_speed, 2).unwrap();
    let addr = start(direct(), Some(agent)).await;
    let (mut ws, _) = connect(addr).await;
    send(&mut ws, json!({"type": "control", "command": "set_mode", "mode": "shared"})).await;
    let ack = recv_kind(&mut ws, "ack").await;
    assert_eq!(ack["mode"], "shared");
    send(&mut ws, json!({"type": "control", "command": "start"})).await;
    let s = recv_kind(&mut ws, "state").await;
    assert_eq!(s["mode"], "shared");
    send(&mut ws, json!({"type": "control", "command": "set_mode", "mode": "direct"})).await;
    let e = recv_kind(&mut ws, "error").await;
    assert!(e["reason"].as_str().unwrap().contains("between episodes"));
    let s = recv_kind(&mut ws, "state").await;
    assert_eq!(s["mode"], "shared");
}

#[tokio::test]
async fn stale_input_decays_to_zero() {
    let mut config = direct();
    config.serve.tick_hz = 100.0;
    config.serve.stale_ticks = 3;
    let addr = start(config, None).await;
    let (mut ws, _) = connect(addr).await;
    send(&mut ws, json!({"type": "control", "command": "start"})).await;
    recv_kind(&mut ws, "state").await;
    send(&mut ws, json!({"type": "input", "vx": 0.01, "vy": 0.0})).await;
    let mut seen_input = false;
    for _ in 0..100 {
        let s = recv_kind(&mut ws, "state").await;
        let x = s["user_action"]["x"].as_f64().unwrap();
        if x == 0.01 {
            seen_input = true;
        } else if seen_input {
            assert_eq!(x, 0.0);
            assert_eq!(s["arbitrated_action"]["x"], 0.0);
            return;
        }
    }
    panic!("input never went stale (seen: {seen_input})");
}

#[tokio::test]
async fn sessions_are_isolated() {
    let addr = start(direct(), None).await;
    let (mut a, id_a) = connect(addr).await;
    let (mut b, id_b) = connect(addr).await;
    assert_ne!(id_a, id_b);
    send(&mut a, json!({"type": "control", "command": "start"})).await;
    let s = recv_kind(&mut a, "state").await;
    assert_eq!(s["session"], id_a.as_str());
    // b has no episode, so its inputs are ignored and it gets no state frames
    send(&mut b, json!({"type": "input", "session": id_b, "vx": 0.1, "vy": 0.0})).await;
    send(&mut b, json!({"type": "control", "command": "reset"})).await;
    let e = recv(&mut b).await;
    assert_eq!(e["type"], "error");
    assert_eq!(e["session"], id_b.as_str());
}
