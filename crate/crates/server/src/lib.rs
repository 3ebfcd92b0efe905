//! Session server: accepts role-based clients over a newline-delimited JSON
//! TCP endpoint and a browser WebSocket endpoint, orders their events through
//! one session actor, logs them, and broadcasts deltas and reports.

mod actor;
pub mod client;
pub mod log;
pub mod protocol;
mod transport;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use coaug_core::session::{
    apply_event, new_session, parse_event_log, replay, EventKind, LogError, SessionConfig, SessionEvent, SessionState,
};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinSet;
use tracing::{info, warn};

pub use transport::{read_frame, Frame};

use crate::actor::{Actor, Command};
use crate::log::EventLog;
use crate::transport::{ConnParams, UiState};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    /// Browser endpoint and static assets; disabled when `None`.
    pub ui_listen: Option<SocketAddr>,
    pub session: SessionConfig,
    /// Event log directory; no log is written when `None`.
    pub log_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub heartbeat: Duration,
    pub max_missed_heartbeats: u32,
    pub max_frame_bytes: usize,
    /// Queued messages per connection before a slow reader is dropped.
    pub outbox_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 7400)),
            ui_listen: None,
            session: SessionConfig::default(),
            log_dir: None,
            static_dir: None,
            heartbeat: Duration::from_secs(5),
            max_missed_heartbeats: 3,
            max_frame_bytes: protocol::MAX_FRAME_BYTES,
            outbox_capacity: 4096,
        }
    }
}

impl ServerConfig {
    /// Both endpoints on ephemeral loopback ports.
    pub fn ephemeral(session: SessionConfig) -> Self {
        ServerConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 0)),
            session,
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("event log {path}: {source}")]
    Log { path: PathBuf, source: std::io::Error },
    #[error("recovering {path}: {source}")]
    Recovery { path: PathBuf, source: LogError },
    #[error("{path} was written with a different session config")]
    ConfigMismatch { path: PathBuf },
    #[error("server task stopped")]
    Stopped,
}

pub struct ServerHandle {
    tcp_addr: SocketAddr,
    ui_addr: Option<SocketAddr>,
    log_path: Option<PathBuf>,
    actor: mpsc::Sender<Command>,
    shutdown: watch::Sender<bool>,
    tasks: Arc<Mutex<JoinSet<()>>>,
    actor_task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn ui_addr(&self) -> Option<SocketAddr> {
        self.ui_addr
    }

    pub fn log_path(&self) -> Option<&std::path::Path> {
        self.log_path.as_deref()
    }

    /// Current authoritative state.
    pub async fn state(&self) -> Result<SessionState, ServerError> {
        let (reply, rx) = oneshot::channel();
        self.actor
            .send(Command::State { reply })
            .await
            .map_err(|_| ServerError::Stopped)?;
        rx.await.map_err(|_| ServerError::Stopped)
    }

    /// Stops accepting, lets every connection drain what was already queued,
    /// and syncs the log.
    pub async fn shutdown(self) {
        let (reply, rx) = oneshot::channel();
        if self.actor.send(Command::Shutdown { reply }).await.is_ok() {
            let _ = rx.await;
        }
        let _ = self.shutdown.send(true);
        let mut tasks = std::mem::take(&mut *self.tasks.lock().expect("task set lock"));
        let drain = async { while tasks.join_next().await.is_some() {} };
        if tokio::time::timeout(Duration::from_secs(5), drain).await.is_err() {
            warn!("connections did not drain within 5 s");
        }
        let _ = self.actor_task.await;
    }

    /// Kills every task without draining, as a crash would. Whatever reached
    /// the log stays there.
    pub fn abort(self) {
        self.actor_task.abort();
        self.tasks.lock().expect("task set lock").abort_all();
    }
}

/// Rebuilds state from an existing log and appends a `Leave` for everyone
/// who was connected when the previous process died.
fn recover(config: &SessionConfig, log: &mut EventLog) -> Result<SessionState, ServerError> {
    let path = log.path().to_owned();
    let bytes = std::fs::read(&path).map_err(|source| ServerError::Log {
        path: path.clone(),
        source,
    })?;
    let events = parse_event_log(&bytes).map_err(|source| ServerError::Recovery {
        path: path.clone(),
        source,
    })?;
    let mut state = replay(config, &events).map_err(|source| ServerError::Recovery {
        path: path.clone(),
        source,
    })?;
    let stale: Vec<String> = state.participants.keys().cloned().collect();
    for id in stale {
        let e = SessionEvent::new(state.applied_seq + 1, id, EventKind::Leave);
        let (next, _) = apply_event(&state, &e).expect("leave of a present participant applies");
        log.append(&e).map_err(|source| ServerError::Log {
            path: path.clone(),
            source,
        })?;
        state = next;
    }
    if !events.is_empty() {
        info!(path = %path.display(), seq = state.applied_seq, "recovered session from log");
    }
    Ok(state)
}

fn open_log(config: &ServerConfig) -> Result<(SessionState, Option<EventLog>), ServerError> {
    let Some(dir) = &config.log_dir else {
        return Ok((new_session(&config.session), None));
    };
    let io = |path: &PathBuf| {
        let path = path.clone();
        move |source| ServerError::Log { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let id = &config.session.session_id;
    let cfg_path = log::config_path(dir, id);
    if let Ok(existing) = std::fs::read(&cfg_path) {
        let same = serde_json::from_slice::<SessionConfig>(&existing).is_ok_and(|c| c == config.session);
        if !same {
            return Err(ServerError::ConfigMismatch { path: cfg_path });
        }
    }
    log::write_config(&cfg_path, &config.session).map_err(io(&cfg_path))?;
    let path = log::log_path(dir, id);
    let mut log = EventLog::open(&path).map_err(io(&path))?;
    let state = recover(&config.session, &mut log)?;
    Ok((state, Some(log)))
}

pub async fn serve(config: ServerConfig) -> Result<ServerHandle, ServerError> {
    let listener = TcpListener::bind(config.listen).await.map_err(|source| ServerError::Bind {
        addr: config.listen,
        source,
    })?;
    let tcp_addr = listener.local_addr().map_err(|source| ServerError::Bind {
        addr: config.listen,
        source,
    })?;
    let ui_listener = match config.ui_listen {
        Some(addr) => Some(
            TcpListener::bind(addr)
                .await
                .map_err(|source| ServerError::Bind { addr, source })?,
        ),
        None => None,
    };
    let ui_addr = ui_listener.as_ref().and_then(|l| l.local_addr().ok());

    let (state, log) = open_log(&config)?;
    let log_path = log.as_ref().map(|l| l.path().to_owned());
    let (actor_tx, actor_rx) = mpsc::channel(1024);
    let actor_task = tokio::spawn(Actor::new(state, log).run(actor_rx));
    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let params = ConnParams {
        session: config.session.session_id.as_str().into(),
        heartbeat: config.heartbeat,
        max_missed: config.max_missed_heartbeats,
        max_frame: config.max_frame_bytes,
        outbox_capacity: config.outbox_capacity,
        actor: actor_tx.clone(),
        shutdown: shutdown_rx.clone(),
    };
    let next_conn = Arc::new(AtomicU64::new(1));
    let tasks = Arc::new(Mutex::new(JoinSet::new()));

    {
        let params = params.clone();
        let next_conn = next_conn.clone();
        let conn_tasks = tasks.clone();
        let mut stop = shutdown_rx.clone();
        tasks.lock().expect("task set lock").spawn(async move {
            loop {
                tokio::select! {
                    accepted = listener.accept() => match accepted {
                        Ok((stream, peer)) => {
                            let conn = next_conn.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                            tracing::debug!(conn, %peer, "line-stream connection");
                            let mut set = conn_tasks.lock().expect("task set lock");
                            while set.try_join_next().is_some() {}
                            set.spawn(transport::serve_tcp(conn, stream, params.clone()));
                        }
                        Err(e) => warn!("accept failed: {e}"),
                    },
                    _ = stop.changed() => break,
                }
            }
        });
    }
    if let Some(listener) = ui_listener {
        let router = transport::ui_router(UiState { params, next_conn }, config.static_dir.as_deref());
        let mut stop = shutdown_rx;
        tasks.lock().expect("task set lock").spawn(async move {
            let graceful = async move {
                let _ = stop.changed().await;
            };
            if let Err(e) = axum::serve(listener, router).with_graceful_shutdown(graceful).await {
                warn!("browser endpoint stopped: {e}");
            }
        });
    }
    info!(%tcp_addr, ui = ?ui_addr, session = %config.session.session_id, "serving");
    Ok(ServerHandle {
        tcp_addr,
        ui_addr,
        log_path,
        actor: actor_tx,
        shutdown: shutdown_tx,
        tasks,
        actor_task,
    })
}
