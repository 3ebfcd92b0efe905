//! JSON envelopes shared by the line-stream and browser transports.
//!
//! Every message is `{"type": ..., "session": ..., "payload": ...}`. On the
//! line-stream transport each envelope is one line of UTF-8 JSON.

use coaug_core::ergonomics::ErgonomicReport;
use coaug_core::session::{EventKind, Phase, Role, SessionEvent, SessionState};
use serde::{Deserialize, Serialize};

/// Largest accepted inbound frame, in bytes (newline excluded).
pub const MAX_FRAME_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(default)]
    pub session: String,
    #[serde(flatten)]
    pub message: WireMessage,
}

impl Envelope {
    pub fn new(session: impl Into<String>, message: WireMessage) -> Self {
        Self {
            session: session.into(),
            message,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelopes serialize")
    }

    pub fn parse(bytes: &[u8]) -> Result<Envelope, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)] // hello_ack is sent once per connection
pub enum WireMessage {
    Hello(Hello),
    HelloAck(HelloAck),
    Event(ClientEvent),
    Delta(Delta),
    Report(ReportMsg),
    Error(ErrorMsg),
    Ping(Heartbeat),
    Pong(Heartbeat),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub role: Role,
    /// Participant id; defaults to the role name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloAck {
    pub connection: u64,
    pub participant: String,
    /// `applied_seq` of `snapshot`; every later delta has a larger seq.
    pub seq: u64,
    pub snapshot: SessionState,
}

/// A client's request. The server assigns the seq.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEvent {
    /// Client-local counter; `(connection, token)` makes retransmits idempotent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<u64>,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub connection: u64,
    pub token: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub seq: u64,
    pub event: SessionEvent,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMsg {
    pub seq: u64,
    pub report: ErgonomicReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    RoleTaken,
    ParticipantTaken,
    AlreadyJoined,
    NotJoined,
    Malformed,
    FrameTooLarge,
    WrongSession,
    Duplicate,
    Authority,
    IllegalTransition,
    NoPendingProposal,
    DimensionOutOfBounds,
    InvalidWorkstation,
    PoseRejected,
    SequenceGap,
    UnknownParticipant,
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Heartbeat {
    #[serde(default)]
    pub nonce: u64,
}
