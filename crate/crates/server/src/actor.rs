//! The single ordering stage: owns the session state, assigns seqs, writes
//! the log and fans notifications out to connections.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use coaug_core::session::{apply_event, EventKind, Notification, SessionError, SessionEvent, SessionState};
use coaug_core::workstation::WorkstationError;
use tokio::sync::{mpsc, oneshot};
use tracing::{debug, error, info, warn};

use crate::log::EventLog;
use crate::protocol::{
    ClientEvent, Delta, Envelope, ErrorCode, ErrorMsg, Hello, HelloAck, Origin, ReportMsg, WireMessage,
};

/// One serialized envelope for a connection's writer.
#[derive(Debug, Clone)]
pub struct Outgoing {
    pub text: Arc<str>,
    /// Close the connection after writing this message.
    pub close: bool,
}

pub type Outbox = mpsc::Sender<Outgoing>;

pub enum Command {
    Connect { conn: u64, out: Outbox },
    Hello { conn: u64, hello: Hello },
    Event { conn: u64, event: ClientEvent },
    Disconnect { conn: u64 },
    State { reply: oneshot::Sender<SessionState> },
    Shutdown { reply: oneshot::Sender<()> },
}

enum CommitError {
    Session(SessionError),
    Log(std::io::Error),
}

impl From<SessionError> for CommitError {
    fn from(e: SessionError) -> Self {
        CommitError::Session(e)
    }
}

struct Conn {
    out: Outbox,
    participant: Option<String>,
    applied_tokens: HashSet<u64>,
}

pub struct Actor {
    state: SessionState,
    log: Option<EventLog>,
    conns: BTreeMap<u64, Conn>,
}

pub fn error_envelope(session: &str, code: ErrorCode, message: impl Into<String>, token: Option<u64>) -> Envelope {
    Envelope::new(
        session,
        WireMessage::Error(ErrorMsg {
            code,
            message: message.into(),
            token,
        }),
    )
}

pub fn error_code(e: &SessionError) -> ErrorCode {
    match e {
        SessionError::SequenceGap { .. } => ErrorCode::SequenceGap,
        SessionError::Authority { .. } => ErrorCode::Authority,
        SessionError::IllegalTransition { .. } => ErrorCode::IllegalTransition,
        SessionError::RoleTaken(_) => ErrorCode::RoleTaken,
        SessionError::UnknownParticipant(_) => ErrorCode::UnknownParticipant,
        SessionError::DuplicateParticipant(_) => ErrorCode::ParticipantTaken,
        SessionError::NoPendingProposal { .. } => ErrorCode::NoPendingProposal,
        SessionError::StalePose { .. } | SessionError::Pose(_) => ErrorCode::PoseRejected,
        SessionError::Workstation(WorkstationError::DimensionOutOfBounds { .. }) => ErrorCode::DimensionOutOfBounds,
        SessionError::Workstation(_) => ErrorCode::InvalidWorkstation,
    }
}

impl Actor {
    pub fn new(state: SessionState, log: Option<EventLog>) -> Actor {
        Actor {
            state,
            log,
            conns: BTreeMap::new(),
        }
    }

    pub async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        while let Some(cmd) = rx.recv().await {
            match cmd {
                Command::Connect { conn, out } => {
                    self.conns.insert(
                        conn,
                        Conn {
                            out,
                            participant: None,
                            applied_tokens: HashSet::new(),
                        },
                    );
                }
                Command::Hello { conn, hello } => self.hello(conn, hello),
                Command::Event { conn, event } => self.event(conn, event),
                Command::Disconnect { conn } => self.disconnect(conn),
                Command::State { reply } => {
                    let _ = reply.send(self.state.clone());
                }
                Command::Shutdown { reply } => {
                    self.conns.clear();
                    if let Some(log) = &self.log {
                        if let Err(e) = log.sync() {
                            error!(path = %log.path().display(), "syncing event log: {e}");
                        }
                    }
                    let _ = reply.send(());
                    return;
                }
            }
        }
    }

    fn session(&self) -> &str {
        &self.state.session_id
    }

    fn send(&mut self, conn: u64, env: &Envelope, close: bool) {
        let Some(c) = self.conns.get(&conn) else { return };
        let msg = Outgoing {
            text: env.to_line().into(),
            close,
        };
        if c.out.try_send(msg).is_err() {
            warn!(conn, "outbox full or closed; dropping connection");
            self.disconnect(conn);
        }
    }

    fn send_error(&mut self, conn: u64, code: ErrorCode, message: impl Into<String>, token: Option<u64>, close: bool) {
        let env = error_envelope(self.session(), code, message, token);
        self.send(conn, &env, close);
    }

    fn hello(&mut self, conn: u64, hello: Hello) {
        let Some(c) = self.conns.get(&conn) else { return };
        if c.participant.is_some() {
            self.send_error(conn, ErrorCode::AlreadyJoined, "connection already has a role", None, false);
            return;
        }
        let participant = hello.participant.unwrap_or_else(|| hello.role.as_str().to_owned());
        let event = SessionEvent::new(
            self.state.applied_seq + 1,
            participant.clone(),
            EventKind::Join { role: hello.role },
        );
        // validate before acking so a refused hello leaves no trace
        if let Err(e) = apply_event(&self.state, &event) {
            info!(conn, %participant, "hello refused: {e}");
            self.send_error(conn, error_code(&e), e.to_string(), None, true);
            return;
        }
        let ack = Envelope::new(
            self.session(),
            WireMessage::HelloAck(HelloAck {
                connection: conn,
                participant: participant.clone(),
                seq: self.state.applied_seq,
                snapshot: self.state.clone(),
            }),
        );
        self.send(conn, &ack, false);
        let Some(c) = self.conns.get_mut(&conn) else { return };
        c.participant = Some(participant);
        if let Err(CommitError::Log(e)) = self.commit(event, None) {
            self.send_error(conn, ErrorCode::Internal, format!("event log unavailable: {e}"), None, true);
        }
    }

    fn event(&mut self, conn: u64, ev: ClientEvent) {
        let Some(c) = self.conns.get(&conn) else { return };
        let Some(participant) = c.participant.clone() else {
            self.send_error(conn, ErrorCode::NotJoined, "send hello before events", ev.token, false);
            return;
        };
        if let EventKind::Join { .. } = ev.kind {
            self.send_error(conn, ErrorCode::AlreadyJoined, "roles are negotiated by hello", ev.token, false);
            return;
        }
        if let Some(t) = ev.token {
            if c.applied_tokens.contains(&t) {
                self.send_error(conn, ErrorCode::Duplicate, format!("token {t} already applied"), Some(t), false);
                return;
            }
        }
        let is_leave = matches!(ev.kind, EventKind::Leave);
        let event = SessionEvent::new(self.state.applied_seq + 1, participant, ev.kind);
        let origin = ev.token.map(|token| Origin { connection: conn, token });
        match self.commit(event, origin) {
            Ok(()) => {
                if let Some(c) = self.conns.get_mut(&conn) {
                    if let Some(t) = ev.token {
                        c.applied_tokens.insert(t);
                    }
                    if is_leave {
                        c.participant = None;
                    }
                }
            }
            Err(CommitError::Session(e)) => self.send_error(conn, error_code(&e), e.to_string(), ev.token, false),
            Err(CommitError::Log(e)) => {
                self.send_error(conn, ErrorCode::Internal, format!("event log unavailable: {e}"), ev.token, false)
            }
        }
    }

    fn disconnect(&mut self, conn: u64) {
        let Some(c) = self.conns.remove(&conn) else { return };
        let Some(participant) = c.participant else { return };
        if !self.state.participants.contains_key(&participant) {
            return;
        }
        debug!(conn, %participant, "synthesizing leave");
        let event = SessionEvent::new(self.state.applied_seq + 1, participant, EventKind::Leave);
        match self.commit(event, None) {
            Ok(()) => {}
            Err(CommitError::Session(e)) => error!(conn, "synthesized leave rejected: {e}"),
            Err(CommitError::Log(_)) => {}
        }
    }

    /// Applies, logs, then broadcasts. State is only replaced once the log
    /// write has succeeded.
    fn commit(&mut self, event: SessionEvent, origin: Option<Origin>) -> Result<(), CommitError> {
        let (next, notes) = apply_event(&self.state, &event)?;
        if let Some(log) = &mut self.log {
            if let Err(e) = log.append(&event) {
                // without a durable record the event must not be acknowledged
                error!(path = %log.path().display(), "event log write failed: {e}");
                return Err(CommitError::Log(e));
            }
        }
        self.state = next;
        for n in notes {
            let msg = match n {
                Notification::Delta { seq, event, phase } => WireMessage::Delta(Delta {
                    seq,
                    event,
                    phase,
                    origin,
                }),
                Notification::Report { seq, report } => WireMessage::Report(ReportMsg { seq, report }),
            };
            self.broadcast(&Envelope::new(self.session(), msg));
        }
        Ok(())
    }

    fn broadcast(&mut self, env: &Envelope) {
        let text: Arc<str> = env.to_line().into();
        let mut stalled = Vec::new();
        for (id, c) in &self.conns {
            if c.participant.is_none() {
                continue;
            }
            let msg = Outgoing {
                text: text.clone(),
                close: false,
            };
            if c.out.try_send(msg).is_err() {
                stalled.push(*id);
            }
        }
        for id in stalled {
            warn!(conn = id, "outbox full or closed; dropping connection");
            self.disconnect(id);
        }
    }
}
