//! Per-connection plumbing shared by both endpoints. Each transport turns its
//! socket into a stream of [`Inbound`] frames and a writer draining an
//! [`Outgoing`] queue; [`drive`] does the rest.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio::sync::{mpsc, watch};
use tokio::time::{interval, MissedTickBehavior};
use tower_http::services::ServeDir;
use tracing::{debug, info};

use crate::actor::{error_envelope, Command, Outgoing};
use crate::protocol::{Envelope, ErrorCode, Heartbeat, WireMessage};

#[derive(Debug)]
pub enum Inbound {
    Frame(Vec<u8>),
    TooLarge,
}

#[derive(Clone)]
pub struct ConnParams {
    pub session: Arc<str>,
    pub heartbeat: Duration,
    pub max_missed: u32,
    pub max_frame: usize,
    pub outbox_capacity: usize,
    pub actor: mpsc::Sender<Command>,
    pub shutdown: watch::Receiver<bool>,
}

fn outgoing(env: &Envelope, close: bool) -> Outgoing {
    Outgoing {
        text: env.to_line().into(),
        close,
    }
}

/// Runs one connection until the peer goes away, misses too many
/// heartbeats, breaks the frame limit, or the server shuts down.
pub async fn drive(conn: u64, mut inbound: mpsc::Receiver<Inbound>, out: mpsc::Sender<Outgoing>, mut p: ConnParams) {
    if p.actor.send(Command::Connect { conn, out: out.clone() }).await.is_err() {
        return;
    }
    let mut ticker = interval(p.heartbeat);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    ticker.tick().await;
    let mut missed = 0u32;
    let mut nonce = 0u64;
    loop {
        tokio::select! {
            msg = inbound.recv() => match msg {
                None => break,
                Some(Inbound::TooLarge) => {
                    let env = error_envelope(&p.session, ErrorCode::FrameTooLarge,
                        format!("frame exceeds {} bytes", p.max_frame), None);
                    let _ = out.send(outgoing(&env, true)).await;
                    break;
                }
                Some(Inbound::Frame(bytes)) => {
                    missed = 0;
                    if !handle_frame(conn, &bytes, &out, &p).await {
                        break;
                    }
                }
            },
            _ = ticker.tick() => {
                if missed >= p.max_missed {
                    info!(conn, missed, "heartbeat timeout");
                    break;
                }
                missed += 1;
                nonce += 1;
                let ping = Envelope::new(&*p.session, WireMessage::Ping(Heartbeat { nonce }));
                if out.try_send(outgoing(&ping, false)).is_err() {
                    break;
                }
            }
            _ = p.shutdown.changed() => break,
            _ = out.closed() => break,
        }
    }
    let _ = p.actor.send(Command::Disconnect { conn }).await;
}

/// Returns false when the connection should end.
async fn handle_frame(conn: u64, bytes: &[u8], out: &mpsc::Sender<Outgoing>, p: &ConnParams) -> bool {
    let reply = |code, msg: String| outgoing(&error_envelope(&p.session, code, msg, None), false);
    let env = match Envelope::parse(bytes) {
        Ok(env) => env,
        Err(e) => return out.send(reply(ErrorCode::Malformed, e.to_string())).await.is_ok(),
    };
    if !env.session.is_empty() && env.session != *p.session {
        let msg = format!("this server hosts session `{}`", p.session);
        return out.send(reply(ErrorCode::WrongSession, msg)).await.is_ok();
    }
    let cmd = match env.message {
        WireMessage::Hello(hello) => Command::Hello { conn, hello },
        WireMessage::Event(event) => Command::Event { conn, event },
        WireMessage::Ping(hb) => {
            let pong = Envelope::new(&*p.session, WireMessage::Pong(hb));
            return out.send(outgoing(&pong, false)).await.is_ok();
        }
        WireMessage::Pong(_) => return true,
        other => {
            let msg = format!("clients may not send {}", message_type(&other));
            return out.send(reply(ErrorCode::Malformed, msg)).await.is_ok();
        }
    };
    p.actor.send(cmd).await.is_ok()
}

fn message_type(m: &WireMessage) -> &'static str {
    match m {
        WireMessage::Hello(_) => "hello",
        WireMessage::HelloAck(_) => "hello_ack",
        WireMessage::Event(_) => "event",
        WireMessage::Delta(_) => "delta",
        WireMessage::Report(_) => "report",
        WireMessage::Error(_) => "error",
        WireMessage::Ping(_) => "ping",
        WireMessage::Pong(_) => "pong",
    }
}

pub enum Frame {
    Line,
    TooLarge,
    Eof,
}

/// Reads one newline-terminated frame into `buf` without buffering more
/// than `max` bytes of it.
pub async fn read_frame<R: AsyncBufRead + Unpin>(r: &mut R, buf: &mut Vec<u8>, max: usize) -> std::io::Result<Frame> {
    buf.clear();
    loop {
        let available = r.fill_buf().await?;
        if available.is_empty() {
            return Ok(if buf.is_empty() { Frame::Eof } else { Frame::Line });
        }
        match available.iter().position(|b| *b == b'\n') {
            Some(i) => {
                let fits = buf.len() + i <= max;
                if fits {
                    buf.extend_from_slice(&available[..i]);
                }
                r.consume(i + 1);
                if !fits {
                    return Ok(Frame::TooLarge);
                }
                if buf.last() == Some(&b'\r') {
                    buf.pop();
                }
                return Ok(Frame::Line);
            }
            None => {
                let n = available.len();
                if buf.len() + n > max {
                    return Ok(Frame::TooLarge);
                }
                buf.extend_from_slice(available);
                r.consume(n);
            }
        }
    }
}

pub async fn serve_tcp(conn: u64, stream: TcpStream, p: ConnParams) {
    let _ = stream.set_nodelay(true);
    let (read, mut write) = stream.into_split();
    let (in_tx, in_rx) = mpsc::channel(64);
    let (out_tx, mut out_rx) = mpsc::channel::<Outgoing>(p.outbox_capacity);
    let max = p.max_frame;

    let reader = tokio::spawn(async move {
        let mut r = BufReader::new(read);
        let mut buf = Vec::new();
        loop {
            match read_frame(&mut r, &mut buf, max).await {
                Ok(Frame::Line) if buf.iter().all(u8::is_ascii_whitespace) => continue,
                Ok(Frame::Line) => {
                    if in_tx.send(Inbound::Frame(std::mem::take(&mut buf))).await.is_err() {
                        break;
                    }
                }
                Ok(Frame::TooLarge) => {
                    let _ = in_tx.send(Inbound::TooLarge).await;
                    break;
                }
                Ok(Frame::Eof) | Err(_) => break,
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(msg) = out_rx.recv().await {
            let mut line = Vec::with_capacity(msg.text.len() + 1);
            line.extend_from_slice(msg.text.as_bytes());
            line.push(b'\n');
            if write.write_all(&line).await.is_err() || msg.close {
                break;
            }
        }
        let _ = write.shutdown().await;
    });
    drive(conn, in_rx, out_tx, p).await;
    let _ = writer.await;
    reader.abort();
    debug!(conn, "line-stream connection closed");
}

#[derive(Clone)]
pub struct UiState {
    pub params: ConnParams,
    pub next_conn: Arc<std::sync::atomic::AtomicU64>,
}

const PLACEHOLDER_INDEX: &str = "<!doctype html><title>coaug</title>\
<p>Session server is running. Browser clients connect to <code>/ws</code>.</p>";

pub fn ui_router(state: UiState, static_dir: Option<&std::path::Path>) -> Router {
    let router = Router::new().route("/ws", get(ws_upgrade)).with_state(state);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<UiState>) -> impl IntoResponse {
    let conn = state.next_conn.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    // accept larger messages so the limit can be reported instead of
    // failing the socket
    ws.max_message_size(state.params.max_frame * 4)
        .on_upgrade(move |socket| serve_ws(conn, socket, state.params))
}

async fn serve_ws(conn: u64, socket: WebSocket, p: ConnParams) {
    let (mut sink, mut stream) = socket.split();
    let (in_tx, in_rx) = mpsc::channel(64);
    let (out_tx, mut out_rx) = mpsc::channel::<Outgoing>(p.outbox_capacity);
    let max = p.max_frame;

    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            let bytes = match msg {
                Message::Text(t) => t.into_bytes(),
                Message::Binary(b) => b,
                Message::Close(_) => break,
                Message::Ping(_) | Message::Pong(_) => continue,
            };
            if bytes.len() > max {
                let _ = in_tx.send(Inbound::TooLarge).await;
                break;
            }
            if in_tx.send(Inbound::Frame(bytes)).await.is_err() {
                break;
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(msg) = out_rx.recv().await {
            if sink.send(Message::Text(msg.text.to_string())).await.is_err() || msg.close {
                break;
            }
        }
        let _ = sink.send(Message::Close(None)).await;
    });
    drive(conn, in_rx, out_tx, p).await;
    let _ = writer.await;
    reader.abort();
    debug!(conn, "browser connection closed");
}
