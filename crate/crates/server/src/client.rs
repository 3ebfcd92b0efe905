//! Line-stream client used by agents, the scenario harness and tests.

use std::net::SocketAddr;

use coaug_core::session::{apply_event, EventKind, Notification, Role, SessionError, SessionState};
use thiserror::Error;
use tokio::io::{AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

use crate::protocol::{ClientEvent, Delta, Envelope, ErrorMsg, Heartbeat, Hello, HelloAck, WireMessage, MAX_FRAME_BYTES};
use crate::transport::{read_frame, Frame};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad frame from server: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("server closed the connection")]
    Closed,
    #[error("server error {:?}: {}", .0.code, .0.message)]
    Server(ErrorMsg),
    #[error("unexpected message: {0}")]
    Unexpected(String),
}

/// Receiving half. Unlike [`Client::recv`] it hands pings to the caller.
pub struct ClientRx {
    reader: BufReader<OwnedReadHalf>,
    buf: Vec<u8>,
}

impl ClientRx {
    pub async fn recv(&mut self) -> Result<Envelope, ClientError> {
        match read_frame(&mut self.reader, &mut self.buf, 64 * MAX_FRAME_BYTES).await? {
            Frame::Eof => Err(ClientError::Closed),
            Frame::TooLarge => Err(ClientError::Unexpected("oversized server frame".into())),
            Frame::Line => Ok(Envelope::parse(&self.buf)?),
        }
    }
}

/// Sending half.
pub struct ClientTx {
    writer: OwnedWriteHalf,
    session: String,
    next_token: u64,
}

impl ClientTx {
    pub async fn send_raw(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        self.writer.write_all(bytes).await?;
        Ok(())
    }

    pub async fn send(&mut self, msg: WireMessage) -> Result<(), ClientError> {
        let mut line = Envelope::new(self.session.clone(), msg).to_line().into_bytes();
        line.push(b'\n');
        self.send_raw(&line).await
    }

    /// Sends an event with a fresh token and returns the token.
    pub async fn event(&mut self, kind: EventKind) -> Result<u64, ClientError> {
        let token = self.next_token;
        self.next_token += 1;
        self.send_with_token(kind, token).await?;
        Ok(token)
    }

    pub async fn send_with_token(&mut self, kind: EventKind, token: u64) -> Result<(), ClientError> {
        self.send(WireMessage::Event(ClientEvent {
            token: Some(token),
            kind,
        }))
        .await
    }
}

pub struct Client {
    rx: ClientRx,
    tx: ClientTx,
}

impl Client {
    pub async fn connect(addr: SocketAddr) -> Result<Client, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let (r, w) = stream.into_split();
        Ok(Client {
            rx: ClientRx {
                reader: BufReader::new(r),
                buf: Vec::new(),
            },
            tx: ClientTx {
                writer: w,
                session: String::new(),
                next_token: 1,
            },
        })
    }

    pub fn into_split(self) -> (ClientRx, ClientTx) {
        (self.rx, self.tx)
    }

    pub async fn send_raw(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        self.tx.send_raw(bytes).await
    }

    pub async fn send(&mut self, msg: WireMessage) -> Result<(), ClientError> {
        self.tx.send(msg).await
    }

    /// Next envelope from the server. Pings are answered and skipped.
    pub async fn recv(&mut self) -> Result<Envelope, ClientError> {
        loop {
            let env = self.rx.recv().await?;
            if let WireMessage::Ping(hb) = env.message {
                self.send(WireMessage::Pong(hb)).await?;
                continue;
            }
            return Ok(env);
        }
    }

    /// Sends hello and waits for the ack; a refusal comes back as
    /// [`ClientError::Server`].
    pub async fn hello(&mut self, role: Role, participant: Option<&str>) -> Result<HelloAck, ClientError> {
        self.send(WireMessage::Hello(Hello {
            role,
            participant: participant.map(str::to_owned),
        }))
        .await?;
        let env = self.recv().await?;
        match env.message {
            WireMessage::HelloAck(ack) => {
                self.tx.session = env.session;
                Ok(ack)
            }
            WireMessage::Error(e) => Err(ClientError::Server(e)),
            other => Err(ClientError::Unexpected(format!("{other:?}"))),
        }
    }

    pub async fn event(&mut self, kind: EventKind) -> Result<u64, ClientError> {
        self.tx.event(kind).await
    }

    pub async fn send_with_token(&mut self, kind: EventKind, token: u64) -> Result<(), ClientError> {
        self.tx.send_with_token(kind, token).await
    }

    pub async fn ping(&mut self, nonce: u64) -> Result<(), ClientError> {
        self.send(WireMessage::Ping(Heartbeat { nonce })).await
    }
}

#[derive(Debug, Error)]
pub enum ReplicaError {
    #[error("delta seq {got} does not follow {expected}")]
    Gap { expected: u64, got: u64 },
    #[error("delta does not apply locally: {0}")]
    Apply(#[from] SessionError),
    #[error("local phase {local} disagrees with server phase {server}")]
    PhaseMismatch {
        local: coaug_core::session::Phase,
        server: coaug_core::session::Phase,
    },
}

/// A client-side copy of the session kept current by replaying deltas.
#[derive(Debug, Clone)]
pub struct Replica {
    pub state: SessionState,
}

impl Replica {
    pub fn from_ack(ack: &HelloAck) -> Replica {
        Replica {
            state: ack.snapshot.clone(),
        }
    }

    /// Applies a delta and returns the notifications the server sent with it,
    /// so the caller knows whether a report follows.
    pub fn apply(&mut self, d: &Delta) -> Result<Vec<Notification>, ReplicaError> {
        let expected = self.state.applied_seq + 1;
        if d.seq != expected || d.event.seq != d.seq {
            return Err(ReplicaError::Gap { expected, got: d.seq });
        }
        let (next, notes) = apply_event(&self.state, &d.event)?;
        if next.phase != d.phase {
            return Err(ReplicaError::PhaseMismatch {
                local: next.phase,
                server: d.phase,
            });
        }
        self.state = next;
        Ok(notes)
    }
}
