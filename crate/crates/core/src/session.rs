//! Replicated session document and the design-review workflow.
//!
//! `apply_event` is a pure transition: a failed event leaves the state
//! untouched and consumes no sequence number. Replaying the event log from
//! the same config reproduces every snapshot.
//!
//! Workflow:
//!
//! ```text
//! Drafting --UserAccept--> UserAccepted --ErgoRequestPose--> UnderReview --ErgoApprove--> Approved
//!    ^                                                          |
//!    +----------------------- ErgoReject -----------------------+
//!    +------- any confirmed dimension change (from any phase) ---
//! ```

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ergonomics::{evaluate, ErgonomicReport, GuidelineSpec};
use crate::geometry::RigidTransform;
use crate::skeleton::{FrameTag, PoseFrame};
use crate::workstation::{default_workstation, DimensionField, WorkstationError, WorkstationSpec, WorkstationType};

pub type ParticipantId = String;

/// Default cap on accepted pose updates per second.
pub const DEFAULT_POSE_RATE_HZ: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Designer,
    Ergonomist,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::User, Role::Designer, Role::Ergonomist];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Designer => "designer",
            Role::Ergonomist => "ergonomist",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Drafting,
    UserAccepted,
    UnderReview,
    Approved,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Drafting => "Drafting",
            Phase::UserAccepted => "UserAccepted",
            Phase::UnderReview => "UnderReview",
            Phase::Approved => "Approved",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Join { role: Role },
    Leave,
    PoseUpdate { frame: PoseFrame },
    ProposeDimension { field: DimensionField, value: f64 },
    ConfirmDimension { field: DimensionField, value: f64 },
    SetColor { color: [u8; 3] },
    UserAccept,
    ErgoRequestPose { label: String },
    ErgoApprove,
    ErgoReject { reason: String },
    ReportPublished { report: ErgonomicReport },
}

/// Payload-free discriminant of [`EventKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Join,
    Leave,
    PoseUpdate,
    ProposeDimension,
    ConfirmDimension,
    SetColor,
    UserAccept,
    ErgoRequestPose,
    ErgoApprove,
    ErgoReject,
    ReportPublished,
}

impl EventType {
    pub const ALL: [EventType; 11] = [
        EventType::Join,
        EventType::Leave,
        EventType::PoseUpdate,
        EventType::ProposeDimension,
        EventType::ConfirmDimension,
        EventType::SetColor,
        EventType::UserAccept,
        EventType::ErgoRequestPose,
        EventType::ErgoApprove,
        EventType::ErgoReject,
        EventType::ReportPublished,
    ];
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

impl EventKind {
    pub fn event_type(&self) -> EventType {
        match self {
            EventKind::Join { .. } => EventType::Join,
            EventKind::Leave => EventType::Leave,
            EventKind::PoseUpdate { .. } => EventType::PoseUpdate,
            EventKind::ProposeDimension { .. } => EventType::ProposeDimension,
            EventKind::ConfirmDimension { .. } => EventType::ConfirmDimension,
            EventKind::SetColor { .. } => EventType::SetColor,
            EventKind::UserAccept => EventType::UserAccept,
            EventKind::ErgoRequestPose { .. } => EventType::ErgoRequestPose,
            EventKind::ErgoApprove => EventType::ErgoApprove,
            EventKind::ErgoReject { .. } => EventType::ErgoReject,
            EventKind::ReportPublished { .. } => EventType::ReportPublished,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub actor: ParticipantId,
    pub kind: EventKind,
}

impl SessionEvent {
    pub fn new(seq: u64, actor: impl Into<ParticipantId>, kind: EventKind) -> Self {
        Self {
            seq,
            actor: actor.into(),
            kind,
        }
    }
}

/// Which roles may originate which events. `ReportPublished` is emitted by
/// the session itself and never accepted from a participant.
pub fn authority(role: Role, kind: EventType) -> bool {
    use EventType::*;
    match kind {
        Join | Leave => true,
        ConfirmDimension | UserAccept | PoseUpdate => role == Role::User,
        ProposeDimension | SetColor => role == Role::Designer,
        ErgoRequestPose | ErgoApprove | ErgoReject => role == Role::Ergonomist,
        ReportPublished => false,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("{role} may not send {kind}")]
    Authority { role: Role, kind: EventType },
    #[error("{kind} is not allowed in phase {phase}")]
    IllegalTransition { phase: Phase, kind: EventType },
    #[error("role {0} is already taken")]
    RoleTaken(Role),
    #[error("participant `{0}` has not joined")]
    UnknownParticipant(ParticipantId),
    #[error("participant `{0}` has already joined")]
    DuplicateParticipant(ParticipantId),
    #[error("no pending proposal {field} = {value}")]
    NoPendingProposal { field: DimensionField, value: f64 },
    #[error("pose timestamp {t_ms} does not advance past {last_ms}")]
    StalePose { t_ms: u64, last_ms: u64 },
    #[error("pose rejected: {0}")]
    Pose(String),
    #[error(transparent)]
    Workstation(#[from] WorkstationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub value: f64,
    pub proposer: ParticipantId,
}

/// Everything a session starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default = "default_session_id")]
    pub session_id: String,
    #[serde(default = "default_sitting")]
    pub workstation: WorkstationSpec,
    #[serde(default)]
    pub guidelines: GuidelineSpec,
    /// Sensor-to-shared transform applied to sensor-frame pose updates.
    #[serde(default)]
    pub calibration: RigidTransform,
    #[serde(default = "default_rate")]
    pub max_pose_rate_hz: u32,
}

fn default_session_id() -> String {
    "session".into()
}

fn default_sitting() -> WorkstationSpec {
    default_workstation(WorkstationType::SittingDesk)
}

fn default_rate() -> u32 {
    DEFAULT_POSE_RATE_HZ
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            session_id: default_session_id(),
            workstation: default_sitting(),
            guidelines: GuidelineSpec::default(),
            calibration: RigidTransform::IDENTITY,
            max_pose_rate_hz: DEFAULT_POSE_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub participants: BTreeMap<ParticipantId, Role>,
    pub workstation: WorkstationSpec,
    pub guidelines: GuidelineSpec,
    pub calibration: RigidTransform,
    pub latest_pose: Option<PoseFrame>,
    pub latest_report: Option<ErgonomicReport>,
    pub phase: Phase,
    pub pending_proposals: BTreeMap<DimensionField, Proposal>,
    pub applied_seq: u64,
    /// Seq of the most recent confirmed dimension change (0 if none).
    pub last_dimension_change_seq: u64,
    /// Seq of the UserAccept that opened the current review cycle.
    pub accepted_seq: Option<u64>,
    /// Poses the ergonomist asked for in the current review.
    pub review_poses: Vec<String>,
    pub max_pose_rate_hz: u32,
    /// Timestamps of poses accepted in the trailing second.
    pub pose_window: VecDeque<u64>,
}

/// What `apply_event` asks the transport to broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Notification {
    Delta { seq: u64, event: SessionEvent, phase: Phase },
    Report { seq: u64, report: ErgonomicReport },
}

pub fn new_session(config: &SessionConfig) -> SessionState {
    SessionState {
        session_id: config.session_id.clone(),
        participants: BTreeMap::new(),
        workstation: config.workstation,
        guidelines: config.guidelines.clone(),
        calibration: config.calibration,
        latest_pose: None,
        latest_report: None,
        phase: Phase::Drafting,
        pending_proposals: BTreeMap::new(),
        applied_seq: 0,
        last_dimension_change_seq: 0,
        accepted_seq: None,
        review_poses: Vec::new(),
        max_pose_rate_hz: config.max_pose_rate_hz,
        pose_window: VecDeque::new(),
    }
}

impl SessionState {
    pub fn role_holder(&self, role: Role) -> Option<&ParticipantId> {
        self.participants.iter().find(|(_, r)| **r == role).map(|(id, _)| id)
    }

    fn back_to_drafting(&mut self) {
        self.phase = Phase::Drafting;
        self.accepted_seq = None;
        self.review_poses.clear();
    }

    /// Applies `e` to a copy of `self`.
    pub fn apply(&self, e: &SessionEvent) -> Result<(SessionState, Vec<Notification>), SessionError> {
        apply_event(self, e)
    }

    pub fn snapshot(&self) -> Vec<u8> {
        snapshot(self)
    }
}

/// Validates and applies one event. On error the input state is returned
/// unchanged (it is never mutated).
pub fn apply_event(s: &SessionState, e: &SessionEvent) -> Result<(SessionState, Vec<Notification>), SessionError> {
    let expected = s.applied_seq + 1;
    if e.seq != expected {
        return Err(SessionError::SequenceGap { expected, got: e.seq });
    }
    let kind = e.kind.event_type();
    let mut next = s.clone();
    next.applied_seq = e.seq;
    let mut report = None;

    if let EventKind::Join { role } = &e.kind {
        if s.participants.contains_key(&e.actor) {
            return Err(SessionError::DuplicateParticipant(e.actor.clone()));
        }
        if s.role_holder(*role).is_some() {
            return Err(SessionError::RoleTaken(*role));
        }
        next.participants.insert(e.actor.clone(), *role);
    } else {
        let role = *s
            .participants
            .get(&e.actor)
            .ok_or_else(|| SessionError::UnknownParticipant(e.actor.clone()))?;
        if !authority(role, kind) {
            return Err(SessionError::Authority { role, kind });
        }
        let illegal = || SessionError::IllegalTransition { phase: s.phase, kind };

        match &e.kind {
            EventKind::Join { .. } | EventKind::ReportPublished { .. } => unreachable!("handled above"),
            EventKind::Leave => {
                next.participants.remove(&e.actor);
            }
            EventKind::PoseUpdate { frame } => {
                if let Some(last) = &s.latest_pose {
                    if frame.timestamp_ms() <= last.timestamp_ms() {
                        return Err(SessionError::StalePose {
                            t_ms: frame.timestamp_ms(),
                            last_ms: last.timestamp_ms(),
                        });
                    }
                }
                let t = frame.timestamp_ms();
                while next.pose_window.front().is_some_and(|&old| old + 1000 <= t) {
                    next.pose_window.pop_front();
                }
                if next.pose_window.len() < s.max_pose_rate_hz as usize {
                    let shared = match frame.frame_tag() {
                        FrameTag::Shared => frame.clone(),
                        FrameTag::Sensor => frame
                            .project_to_shared(&s.calibration)
                            .map_err(|e| SessionError::Pose(e.to_string()))?,
                    };
                    let r = evaluate(&shared, &s.workstation, &s.guidelines)
                        .map_err(|e| SessionError::Pose(e.to_string()))?;
                    next.pose_window.push_back(t);
                    next.latest_pose = Some(shared);
                    next.latest_report = Some(r.clone());
                    report = Some(r);
                }
                // otherwise over the rate cap: dropped, but the seq is still consumed
            }
            EventKind::ProposeDimension { field, value } => {
                s.workstation.adjust_dimension(*field, *value)?;
                next.pending_proposals.insert(
                    *field,
                    Proposal {
                        value: *value,
                        proposer: e.actor.clone(),
                    },
                );
            }
            EventKind::ConfirmDimension { field, value } => {
                let matches_pending = s.pending_proposals.get(field).is_some_and(|p| p.value == *value);
                let designer_present = s.role_holder(Role::Designer).is_some();
                if !matches_pending && designer_present {
                    return Err(SessionError::NoPendingProposal {
                        field: *field,
                        value: *value,
                    });
                }
                next.workstation = s.workstation.adjust_dimension(*field, *value)?;
                next.pending_proposals.remove(field);
                next.last_dimension_change_seq = e.seq;
                next.back_to_drafting();
            }
            EventKind::SetColor { color } => {
                next.workstation = s.workstation.with_color(*color);
            }
            EventKind::UserAccept => {
                if s.phase != Phase::Drafting {
                    return Err(illegal());
                }
                next.phase = Phase::UserAccepted;
                next.accepted_seq = Some(e.seq);
            }
            EventKind::ErgoRequestPose { label } => {
                if !matches!(s.phase, Phase::UserAccepted | Phase::UnderReview) {
                    return Err(illegal());
                }
                next.phase = Phase::UnderReview;
                next.review_poses.push(label.clone());
            }
            EventKind::ErgoApprove => {
                if s.phase != Phase::UnderReview {
                    return Err(illegal());
                }
                next.phase = Phase::Approved;
            }
            EventKind::ErgoReject { .. } => {
                if s.phase != Phase::UnderReview {
                    return Err(illegal());
                }
                next.back_to_drafting();
            }
        }
    }

    let mut notes = vec![Notification::Delta {
        seq: e.seq,
        event: e.clone(),
        phase: next.phase,
    }];
    if let Some(report) = report {
        notes.push(Notification::Report { seq: e.seq, report });
    }
    Ok((next, notes))
}

/// Serializes any value as JSON with object keys sorted at every level.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("session types serialize to JSON");
    let mut out = String::new();
    write_canonical(&v, &mut out);
    out.into_bytes()
}

fn write_canonical(v: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string key"));
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// Canonical snapshot bytes (sorted-key JSON, no trailing newline).
pub fn snapshot(s: &SessionState) -> Vec<u8> {
    canonical_json(s)
}

pub fn restore_snapshot(bytes: &[u8]) -> Result<SessionState, serde_json::Error> {
    serde_json::from_slice(bytes)
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("event log line {line}: {source}")]
    Apply { line: usize, source: SessionError },
}

/// One event-log line, newline included.
pub fn encode_log_line(e: &SessionEvent) -> Vec<u8> {
    let mut line = canonical_json(e);
    line.push(b'\n');
    line
}

pub fn parse_event_log(bytes: &[u8]) -> Result<Vec<SessionEvent>, LogError> {
    let mut events = Vec::new();
    for (i, line) in bytes.split(|b| *b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let e = serde_json::from_slice(line).map_err(|source| LogError::Parse { line: i + 1, source })?;
        events.push(e);
    }
    Ok(events)
}

/// Rebuilds a session by applying `events` in order to a fresh state.
pub fn replay(config: &SessionConfig, events: &[SessionEvent]) -> Result<SessionState, LogError> {
    let mut state = new_session(config);
    for (i, e) in events.iter().enumerate() {
        state = apply_event(&state, e)
            .map_err(|source| LogError::Apply { line: i + 1, source })?
            .0;
    }
    Ok(state)
}
