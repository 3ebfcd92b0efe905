//! Drives scripted agents against a live server in lockstep.
//!
//! Every action is taken at a virtual time. The harness sends one action,
//! then waits until every agent has received the outcome (or the sender has
//! received the error) before taking the next, so the interleaving depends
//! only on the script and the seed.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use coaug_core::ergonomics::{ErgonomicReport, Measure};
use coaug_core::pose_io::{parse_pose_stream, PoseFormat};
use coaug_core::session::{
    canonical_json, snapshot, EventKind, EventType, Notification, Phase, Role, SessionEvent, SessionState,
};
use coaug_core::skeleton::SkeletonError;
use coaug_server::client::{Client, ClientError, Replica, ReplicaError};
use coaug_server::protocol::{Delta, ErrorCode, WireMessage};
use coaug_server::{log, serve, ServerConfig, ServerError, ServerHandle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::{LoadedScript, ReviewPolicy, ScriptError};

/// Reports counted at the end of a run for the final-window statistic.
pub const FINAL_WINDOW: usize = 30;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("pose source {path}: {source}")]
    Pose { path: PathBuf, source: SkeletonError },
    #[error("pose source {path}: {source}")]
    PoseIo { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error("{role} agent: {source}")]
    Client { role: Role, source: ClientError },
    #[error("{role} agent diverged: {source}")]
    Replica { role: Role, source: ReplicaError },
    #[error("{role} agent: {message}")]
    Protocol { role: Role, message: String },
    #[error("final snapshots differ between agents and server")]
    Divergence,
    #[error("event log {0} already exists; use an empty log directory")]
    LogExists(PathBuf),
}

impl ScenarioError {
    /// Failures caused by the filesystem or sockets rather than bad input.
    pub fn is_io(&self) -> bool {
        match self {
            ScenarioError::Script(e) => e.is_io(),
            ScenarioError::PoseIo { .. } | ScenarioError::Client { .. } | ScenarioError::LogExists(_) => true,
            ScenarioError::Server(e) => matches!(e, ServerError::Bind { .. } | ServerError::Log { .. }),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the script's seed.
    pub seed: Option<u64>,
    /// Use a running server instead of starting one in-process.
    pub server: Option<SocketAddr>,
    /// Event log directory for the in-process server.
    pub log_dir: Option<PathBuf>,
    /// Pace actions by the wall clock instead of running as fast as possible.
    pub realtime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub seq: u64,
    pub at_ms: u64,
    pub event: SessionEvent,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub at_ms: u64,
    pub role: Role,
    pub event: EventType,
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub seq: u64,
    pub t_ms: u64,
    pub violations: Vec<Measure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub height_m: f64,
    pub width_m: f64,
    pub length_m: f64,
    pub layer_to_ground_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_phase: Phase,
    /// Phase after each applied event, consecutive repeats collapsed.
    pub phases: Vec<Phase>,
    pub applied_events: u64,
    pub rejected_events: usize,
    pub reports: usize,
    pub reports_with_violations: usize,
    pub violations_total: usize,
    pub final_window: usize,
    pub final_window_violations: usize,
    pub final_dimensions: Dimensions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub name: String,
    pub seed: u64,
    pub entries: Vec<Entry>,
    pub rejected: Vec<Rejection>,
    pub reports: Vec<ReportLine>,
    pub summary: Summary,
    pub final_snapshot: SessionState,
}

impl Transcript {
    /// Canonical JSON with a trailing newline.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = canonical_json(self);
        b.push(b'\n');
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Source {
    Script,
    Policy(u64),
}

struct Action {
    role: Role,
    kind: EventKind,
    source: Source,
}

#[derive(Debug)]
enum Review {
    Idle,
    Requesting,
    Watching { seen: usize, violated: BTreeSet<Measure> },
    Deciding,
}

struct Reviewer {
    policy: ReviewPolicy,
    generation: u64,
    state: Review,
}

impl Reviewer {
    fn reset(&mut self) {
        if !matches!(self.state, Review::Idle) {
            self.state = Review::Idle;
            self.generation += 1;
        }
    }

    fn on_delta(&mut self, d: &Delta) -> Option<EventKind> {
        match d.phase {
            Phase::Drafting | Phase::Approved => self.reset(),
            Phase::UserAccepted => {
                if let Review::Idle = self.state {
                    self.state = Review::Requesting;
                    return Some(EventKind::ErgoRequestPose {
                        label: self.policy.label.clone(),
                    });
                }
            }
            Phase::UnderReview => {
                if let EventKind::ErgoRequestPose { .. } = d.event.kind {
                    self.state = Review::Watching {
                        seen: 0,
                        violated: BTreeSet::new(),
                    };
                }
            }
        }
        None
    }

    fn on_report(&mut self, r: &ErgonomicReport) -> Option<EventKind> {
        let Review::Watching { seen, violated } = &mut self.state else {
            return None;
        };
        *seen += 1;
        violated.extend(r.violations().map(|(m, _)| m));
        if *seen < self.policy.review_reports {
            return None;
        }
        let decision = if violated.is_empty() {
            EventKind::ErgoApprove
        } else {
            let names: Vec<&str> = violated.iter().map(|m| m.as_str()).collect();
            EventKind::ErgoReject {
                reason: format!("violations in the last {} reports: {}", seen, names.join(", ")),
            }
        };
        self.state = Review::Deciding;
        Some(decision)
    }
}

struct Agent {
    client: Client,
    replica: Replica,
}

struct Harness {
    agents: BTreeMap<Role, Agent>,
    queue: BTreeMap<(u64, u64), Action>,
    order: u64,
    now: u64,
    rng: ChaCha8Rng,
    reviewer: Option<Reviewer>,
    entries: Vec<Entry>,
    rejected: Vec<Rejection>,
    reports: Vec<ReportLine>,
}

impl Harness {
    fn schedule(&mut self, at: u64, role: Role, kind: EventKind, source: Source) {
        self.queue.insert((at, self.order), Action { role, kind, source });
        self.order += 1;
    }

    fn agent(&mut self, role: Role) -> &mut Agent {
        self.agents.get_mut(&role).expect("agent exists for scheduled role")
    }

    async fn recv(&mut self, role: Role) -> Result<WireMessage, ScenarioError> {
        let agent = self.agent(role);
        let env = tokio::time::timeout(Duration::from_secs(10), agent.client.recv())
            .await
            .map_err(|_| ScenarioError::Protocol {
                role,
                message: "timed out waiting for the server".into(),
            })?
            .map_err(|source| ScenarioError::Client { role, source })?;
        Ok(env.message)
    }

    /// Consumes delta `d` (and its report, if any) at `role`'s replica.
    async fn absorb(&mut self, role: Role, d: &Delta) -> Result<Option<ErgonomicReport>, ScenarioError> {
        let notes = self
            .agent(role)
            .replica
            .apply(d)
            .map_err(|source| ScenarioError::Replica { role, source })?;
        let expected = notes.into_iter().find_map(|n| match n {
            Notification::Report { report, .. } => Some(report),
            Notification::Delta { .. } => None,
        });
        let Some(expected) = expected else { return Ok(None) };
        match self.recv(role).await? {
            WireMessage::Report(r) if r.seq == d.seq && r.report == expected => Ok(Some(r.report)),
            other => Err(ScenarioError::Protocol {
                role,
                message: format!("expected report for seq {}, got {other:?}", d.seq),
            }),
        }
    }

    /// Delivers delta `d`, already received by `origin`, to everyone else and
    /// records it.
    async fn settle(&mut self, origin: Role, d: Delta) -> Result<(), ScenarioError> {
        let report = self.absorb(origin, &d).await?;
        let others: Vec<Role> = self.agents.keys().copied().filter(|r| *r != origin).collect();
        for role in others {
            match self.recv(role).await? {
                WireMessage::Delta(other) if other == d => {
                    self.absorb(role, &other).await?;
                }
                other => {
                    return Err(ScenarioError::Protocol {
                        role,
                        message: format!("expected delta {}, got {other:?}", d.seq),
                    })
                }
            }
        }
        self.entries.push(Entry {
            seq: d.seq,
            at_ms: self.now,
            event: d.event.clone(),
            phase: d.phase,
        });
        let mut follow_up = Vec::new();
        if let Some(rv) = &mut self.reviewer {
            follow_up.extend(rv.on_delta(&d));
        }
        if let Some(r) = report {
            self.reports.push(ReportLine {
                seq: d.seq,
                t_ms: r.t_ms,
                violations: r.violations().map(|(m, _)| m).collect(),
            });
            if let Some(rv) = &mut self.reviewer {
                follow_up.extend(rv.on_report(&r));
            }
        }
        for kind in follow_up {
            let (lo, hi) = {
                let p = &self.reviewer.as_ref().expect("follow-ups come from the reviewer").policy;
                (p.reaction_ms[0], p.reaction_ms[1])
            };
            let delay = self.rng.gen_range(lo..=hi);
            let generation = self.reviewer.as_ref().map_or(0, |r| r.generation);
            self.schedule(self.now + delay, Role::Ergonomist, kind, Source::Policy(generation));
        }
        Ok(())
    }

    async fn join(&mut self, role: Role, participant: Option<&str>, addr: SocketAddr) -> Result<(), ScenarioError> {
        let client_err = |source| ScenarioError::Client { role, source };
        let mut client = Client::connect(addr).await.map_err(client_err)?;
        let ack = client.hello(role, participant).await.map_err(client_err)?;
        let replica = Replica::from_ack(&ack);
        self.agents.insert(role, Agent { client, replica });
        match self.recv(role).await? {
            WireMessage::Delta(d) if d.seq == ack.seq + 1 => self.settle(role, d).await,
            other => Err(ScenarioError::Protocol {
                role,
                message: format!("expected own join delta, got {other:?}"),
            }),
        }
    }

    async fn act(&mut self, action: Action) -> Result<(), ScenarioError> {
        let role = action.role;
        let event = action.kind.event_type();
        let token = self
            .agent(role)
            .client
            .event(action.kind)
            .await
            .map_err(|source| ScenarioError::Client { role, source })?;
        match self.recv(role).await? {
            WireMessage::Delta(d) if d.origin.map(|o| o.token) == Some(token) => self.settle(role, d).await,
            WireMessage::Error(e) if e.token == Some(token) => {
                self.rejected.push(Rejection {
                    at_ms: self.now,
                    role,
                    event,
                    code: e.code,
                    message: e.message,
                });
                if let (Source::Policy(_), Some(rv)) = (action.source, &mut self.reviewer) {
                    rv.reset();
                }
                Ok(())
            }
            other => Err(ScenarioError::Protocol {
                role,
                message: format!("expected the outcome of token {token}, got {other:?}"),
            }),
        }
    }
}

fn summarize(entries: &[Entry], rejected: usize, reports: &[ReportLine], state: &SessionState) -> Summary {
    let mut phases: Vec<Phase> = Vec::new();
    for e in entries {
        if phases.last() != Some(&e.phase) {
            phases.push(e.phase);
        }
    }
    let window = &reports[reports.len().saturating_sub(FINAL_WINDOW)..];
    let w = &state.workstation;
    Summary {
        final_phase: state.phase,
        phases,
        applied_events: state.applied_seq,
        rejected_events: rejected,
        reports: reports.len(),
        reports_with_violations: reports.iter().filter(|r| !r.violations.is_empty()).count(),
        violations_total: reports.iter().map(|r| r.violations.len()).sum(),
        final_window: window.len(),
        final_window_violations: window.iter().map(|r| r.violations.len()).sum(),
        final_dimensions: Dimensions {
            height_m: w.height_m,
            width_m: w.width_m,
            length_m: w.length_m,
            layer_to_ground_m: w.layer_to_ground_m,
        },
    }
}

async fn start_server(loaded: &LoadedScript, opts: &RunOptions) -> Result<ServerHandle, ScenarioError> {
    if let Some(dir) = &opts.log_dir {
        let path = log::log_path(dir, &loaded.session.session_id);
        if path.exists() {
            return Err(ScenarioError::LogExists(path));
        }
    }
    let config = ServerConfig {
        log_dir: opts.log_dir.clone(),
        ..ServerConfig::ephemeral(loaded.session.clone())
    };
    Ok(serve(config).await?)
}

pub async fn run_scenario(loaded: &LoadedScript, opts: &RunOptions) -> Result<Transcript, ScenarioError> {
    let script = &loaded.script;
    let seed = opts.seed.unwrap_or(script.seed);
    let server = match opts.server {
        Some(_) => None,
        None => Some(start_server(loaded, opts).await?),
    };
    let addr = match (&server, opts.server) {
        (Some(s), _) => s.tcp_addr(),
        (None, Some(a)) => a,
        (None, None) => unreachable!("one of the two is set"),
    };

    let mut h = Harness {
        agents: BTreeMap::new(),
        queue: BTreeMap::new(),
        order: 0,
        now: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
        reviewer: script
            .agents
            .get(&Role::Ergonomist)
            .and_then(|a| a.policy.clone())
            .map(|policy| Reviewer {
                policy,
                generation: 0,
                state: Review::Idle,
            }),
        entries: Vec::new(),
        rejected: Vec::new(),
        reports: Vec::new(),
    };

    if let (Some(path), Some(src)) = (&loaded.pose_path, &script.pose_source) {
        let bytes = std::fs::read(path).map_err(|source| ScenarioError::PoseIo {
            path: path.clone(),
            source,
        })?;
        let format = PoseFormat::from_path(path).unwrap_or(PoseFormat::Csv);
        let stream = parse_pose_stream(&bytes, format).map_err(|source| ScenarioError::Pose {
            path: path.clone(),
            source,
        })?;
        let t0 = stream.frames.first().map_or(0, |f| f.timestamp_ms());
        for frame in stream.frames {
            let at = src.start_ms + ((frame.timestamp_ms() - t0) as f64 / src.rate).round() as u64;
            h.schedule(at, Role::User, EventKind::PoseUpdate { frame }, Source::Script);
        }
    }
    for (role, agent) in &script.agents {
        for a in &agent.actions {
            h.schedule(a.at_ms, *role, a.event.clone(), Source::Script);
        }
    }

    for role in Role::ALL {
        if let Some(agent) = script.agents.get(&role) {
            h.join(role, agent.participant.as_deref(), addr).await?;
        }
    }

    let start = tokio::time::Instant::now();
    while let Some(((at, _), action)) = h.queue.pop_first() {
        if let Source::Policy(generation) = action.source {
            if h.reviewer.as_ref().is_some_and(|r| r.generation != generation) {
                continue;
            }
        }
        h.now = at;
        if opts.realtime {
            tokio::time::sleep_until(start + Duration::from_millis(at)).await;
        }
        h.act(action).await?;
    }

    let mut finals = h.agents.values().map(|a| snapshot(&a.replica.state));
    let first = finals.next().unwrap_or_default();
    if finals.any(|s| s != first) {
        return Err(ScenarioError::Divergence);
    }
    let final_state = match &server {
        Some(s) => {
            let truth = s.state().await?;
            if !h.agents.is_empty() && snapshot(&truth) != first {
                return Err(ScenarioError::Divergence);
            }
            truth
        }
        None => h
            .agents
            .values()
            .next()
            .map(|a| a.replica.state.clone())
            .ok_or_else(|| ScenarioError::Script(ScriptError::Invalid("script has no agents".into())))?,
    };
    if let Some(s) = server {
        s.shutdown().await;
    }
    drop(h.agents);

    Ok(Transcript {
        name: script.name.clone(),
        seed,
        summary: summarize(&h.entries, h.rejected.len(), &h.reports, &final_state),
        entries: h.entries,
        rejected: h.rejected,
        reports: h.reports,
        final_snapshot: final_state,
    })
}
