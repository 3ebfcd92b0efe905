//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Built with `harness = false`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use coaug_core::ergonomics::{
    evaluate, lower_arm_flexion, neck_flexion, trunk_flexion, upper_arm_flexion, viewpoint_angle, GuidelineSpec,
    Measure, Side, Verdict,
};
use coaug_core::geometry::{RigidTransform, UnitQuaternion, Vec3};
use coaug_core::pose_io::{parse_pose_stream, PoseFormat};
use coaug_core::session::{
    apply_event, new_session, parse_event_log, replay, snapshot, EventKind, Phase, Role, SessionConfig, SessionEvent,
    SessionState,
};
use coaug_core::skeleton::{FrameTag, JointId, PoseFrame, TrackingMode};
use coaug_core::workstation::{default_workstation, DimensionField, WorkstationType};
use coaug_scenario::synth::{synth_pose, BodyDims, Posture, SynthParams};
use coaug_server::client::{Client, ClientRx, ClientTx, Replica};
use coaug_server::protocol::{Delta, WireMessage};
use coaug_server::{serve, ServerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn arccos_deg(a: Vec3, b: Vec3) -> f64 {
    let c = (a.x * b.x + a.y * b.y + a.z * b.z) / ((a.x * a.x + a.y * a.y + a.z * a.z).sqrt() * (b.x * b.x + b.y * b.y + b.z * b.z).sqrt());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------

fn elbow_guideline_fidelity() -> Check {
    let g = GuidelineSpec::shipped();
    let desk = default_workstation(WorkstationType::SittingDesk);
    let mut compliant = Vec::new();
    for e in 0..=180u32 {
        let f = synth_pose(&SynthParams::new(Posture::symmetric(0.0, 0.0, 0.0, e as f64))).map_err(|x| x.to_string())?;
        let r = evaluate(&f, &desk, g).map_err(|x| x.to_string())?;
        let l = matches!(r.verdicts[&Measure::LowerArmL], Verdict::Compliant);
        let rr = matches!(r.verdicts[&Measure::LowerArmR], Verdict::Compliant);
        ensure(l == rr, || format!("left/right verdicts differ at {e}"))?;
        if l {
            compliant.push(e);
        }
    }
    let want: Vec<u32> = (70..=100).collect();
    ensure(compliant == want, || format!("compliant elbow angles {compliant:?}"))?;
    Ok(format!("compliant exactly at {}..={} of 0..=180", want[0], want[want.len() - 1]))
}

fn random_unit_quaternion(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return UnitQuaternion::new(q[0], q[1], q[2], q[3]).unwrap();
        }
    }
}

fn random_body(rng: &mut ChaCha8Rng) -> BodyDims {
    let d = BodyDims::default();
    let mut s = || rng.gen_range(0.6..1.4);
    BodyDims {
        trunk_m: d.trunk_m * s(),
        neck_m: d.neck_m * s(),
        head_m: d.head_m * s(),
        shoulder_half_width_m: d.shoulder_half_width_m * s(),
        upper_arm_m: d.upper_arm_m * s(),
        forearm_m: d.forearm_m * s(),
        hand_m: d.hand_m * s(),
        hand_tip_m: d.hand_tip_m * s(),
        hip_half_width_m: d.hip_half_width_m * s(),
        thigh_m: d.thigh_m * s(),
        shin_m: d.shin_m * s(),
        foot_m: d.foot_m * s(),
    }
}

fn random_posture(rng: &mut ChaCha8Rng) -> Posture {
    let mut a = || rng.gen_range(0.0..=180.0);
    Posture {
        trunk_deg: a(),
        neck_deg: a(),
        upper_arm_l_deg: a(),
        upper_arm_r_deg: a(),
        elbow_l_deg: a(),
        elbow_r_deg: a(),
    }
}

fn angle_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11E);
    let g = GuidelineSpec::shipped();
    let desk = default_workstation(WorkstationType::SittingDesk);
    let monitor = desk.monitor_center_shared();
    let (mut worst_oracle, mut worst_trip) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let posture = random_posture(&mut rng);
        let mut p = SynthParams::new(posture);
        p.body = random_body(&mut rng);
        p.mode = if i % 2 == 0 { TrackingMode::Sitting } else { TrackingMode::Standing };
        // upright placement: trunk flexion is measured against world up
        p.placement = RigidTransform::new(
            UnitQuaternion::from_axis_angle(Vec3::Y, rng.gen_range(-180.0..180.0)).unwrap(),
            Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(-2.0..2.0)),
        );
        let f = synth_pose(&p).map_err(|e| e.to_string())?;
        let j = |id| f.joint(id).unwrap();
        let d = |a: JointId, b: JointId| Vec3::new(j(b).x - j(a).x, j(b).y - j(a).y, j(b).z - j(a).z);
        use JointId::*;

        let eye = j(Head) + g.eye_offset_m;
        let gaze = Vec3::new(monitor.x - eye.x, monitor.y - eye.y, monitor.z - eye.z);
        let oracle = [
            ("trunk", arccos_deg(d(SpineBase, SpineShoulder), Vec3::Y)),
            ("neck", arccos_deg(d(Neck, Head), d(SpineShoulder, Neck))),
            ("upper_arm_l", arccos_deg(d(ShoulderL, ElbowL), d(SpineShoulder, SpineBase))),
            ("upper_arm_r", arccos_deg(d(ShoulderR, ElbowR), d(SpineShoulder, SpineBase))),
            ("lower_arm_l", arccos_deg(d(ElbowL, ShoulderL), d(ElbowL, WristL))),
            ("lower_arm_r", arccos_deg(d(ElbowR, ShoulderR), d(ElbowR, WristR))),
            ("viewpoint", (arccos_deg(gaze, Vec3::Y) - 90.0).abs()),
        ];
        let report = evaluate(&f, &desk, g).map_err(|e| e.to_string())?;
        let a = &report.angles;
        let ops = [
            (trunk_flexion(&f).ok(), a.trunk_flexion_deg),
            (neck_flexion(&f).ok(), a.neck_flexion_deg),
            (upper_arm_flexion(&f, Side::Left).ok(), a.upper_arm_l_deg),
            (upper_arm_flexion(&f, Side::Right).ok(), a.upper_arm_r_deg),
            (lower_arm_flexion(&f, Side::Left).ok(), a.lower_arm_l_deg),
            (lower_arm_flexion(&f, Side::Right).ok(), a.lower_arm_r_deg),
            (viewpoint_angle(&f, monitor, g.eye_offset_m).ok(), a.viewpoint_deg),
        ];
        let mut measured = [0.0; 7];
        for (k, ((name, want), (op, in_report))) in oracle.iter().zip(ops).enumerate() {
            let (op, in_report) = match (op, in_report) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(format!("pose {i}: {name} unavailable")),
            };
            let diff = (op - want).abs().max((in_report - want).abs());
            worst_oracle = worst_oracle.max(diff);
            measured[k] = op;
        }
        let requested = [
            posture.trunk_deg,
            posture.neck_deg,
            posture.upper_arm_l_deg,
            posture.upper_arm_r_deg,
            posture.elbow_l_deg,
            posture.elbow_r_deg,
        ];
        for (req, got) in requested.iter().zip(measured) {
            worst_trip = worst_trip.max((req - got).abs());
        }
    }
    ensure(worst_oracle <= 1e-9, || format!("oracle mismatch {worst_oracle:e} deg"))?;
    ensure(worst_trip < 1e-6, || format!("round-trip error {worst_trip:e} deg"))?;
    Ok(format!("max oracle diff {worst_oracle:.1e} deg, max round-trip error {worst_trip:.1e} deg"))
}

fn calibration_rigidity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCA1B);
    let (mut worst_dist, mut worst_trip) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let t = RigidTransform::new(
            random_unit_quaternion(&mut rng),
            Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
        );
        let mut p = SynthParams::new(random_posture(&mut rng));
        p.mode = TrackingMode::Standing;
        p.placement = RigidTransform::new(random_unit_quaternion(&mut rng), Vec3::new(rng.gen_range(-3.0..3.0), 0.0, 1.0));
        let f = synth_pose(&p).map_err(|e| e.to_string())?;
        let sensor = PoseFrame::new(f.timestamp_ms(), f.mode(), FrameTag::Sensor, f.joints().clone()).unwrap();
        let g = sensor.project_to_shared(&t).map_err(|e| e.to_string())?;
        let joints: Vec<(JointId, Vec3)> = f.joints().iter().map(|(k, v)| (*k, *v)).collect();
        for (i, (a, pa)) in joints.iter().enumerate() {
            for (b, pb) in &joints[i + 1..] {
                let after = g.joint(*a).unwrap().distance(g.joint(*b).unwrap());
                worst_dist = worst_dist.max((pa.distance(*pb) - after).abs());
            }
        }
        let inv = t.inverse();
        for id in [t.compose(&inv), inv.compose(&t)] {
            let q = id.rotation.to_array();
            // q and -q are the same rotation
            let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
            let qerr = [q[0] * sign - 1.0, q[1], q[2], q[3]].iter().fold(0.0f64, |m, c| m.max(c.abs()));
            worst_trip = worst_trip.max(qerr).max(id.translation.norm());
            for (_, v) in &joints {
                worst_trip = worst_trip.max(id.apply(*v).distance(*v));
            }
        }
    }
    ensure(worst_dist <= 1e-9, || format!("distance change {worst_dist:e} m"))?;
    ensure(worst_trip <= 1e-9, || format!("invert/compose residual {worst_trip:e}"))?;
    Ok(format!("max distance change {worst_dist:.1e} m, max identity residual {worst_trip:.1e}"))
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Debug)]
enum Sym {
    ProposeDim,
    ConfirmDim,
    UserAccept,
    ErgoRequestPose,
    ErgoApprove,
    ErgoReject,
}

const SYMS: [Sym; 6] = [
    Sym::ProposeDim,
    Sym::ConfirmDim,
    Sym::UserAccept,
    Sym::ErgoRequestPose,
    Sym::ErgoApprove,
    Sym::ErgoReject,
];

const HEIGHT: f64 = 0.74;

fn participant(role: Role) -> String {
    format!("p-{}", role.as_str())
}

/// Independent phase table: which (symbol, role) pairs are legal and where
/// they lead. `pending` is whether the height proposal is outstanding.
fn model(phase: Phase, pending: bool, sym: Sym, role: Role) -> Option<(Phase, bool)> {
    use Phase::*;
    match (sym, role) {
        (Sym::ProposeDim, Role::Designer) => Some((phase, true)),
        (Sym::ConfirmDim, Role::User) if pending => Some((Drafting, false)),
        (Sym::UserAccept, Role::User) if phase == Drafting => Some((UserAccepted, pending)),
        (Sym::ErgoRequestPose, Role::Ergonomist) if matches!(phase, UserAccepted | UnderReview) => {
            Some((UnderReview, pending))
        }
        (Sym::ErgoApprove, Role::Ergonomist) if phase == UnderReview => Some((Approved, pending)),
        (Sym::ErgoReject, Role::Ergonomist) if phase == UnderReview => Some((Drafting, pending)),
        _ => None,
    }
}

#[derive(Default)]
struct Tally {
    sequences: u64,
    applies: u64,
    errors: u64,
    approvals: u64,
    unsafe_approvals: u64,
    partial_errors: u64,
    model_mismatches: u64,
}

/// Path facts since the last return to Drafting.
#[derive(Clone, Copy)]
struct PathFacts {
    accepted: bool,
    reviewed: bool,
}

type Fingerprint = (Phase, u64, Option<u64>, usize, usize, [u64; 4]);

fn fingerprint(s: &SessionState) -> Fingerprint {
    let w = &s.workstation;
    (
        s.phase,
        s.applied_seq,
        s.accepted_seq,
        s.pending_proposals.len(),
        s.review_poses.len(),
        [w.height_m.to_bits(), w.width_m.to_bits(), w.length_m.to_bits(), w.layer_to_ground_m.to_bits()],
    )
}

fn explore(s: &SessionState, facts: PathFacts, depth: usize, alphabet: &mut [(Sym, Role, SessionEvent)], t: &mut Tally) {
    t.sequences += 1;
    if depth == 0 {
        return;
    }
    for i in 0..alphabet.len() {
        let (sym, role) = (alphabet[i].0, alphabet[i].1);
        alphabet[i].2.seq = s.applied_seq + 1;
        let before = fingerprint(s);
        let pending = s.pending_proposals.get(&DimensionField::Height).is_some_and(|p| p.value == HEIGHT);
        let predicted = model(s.phase, pending, sym, role);
        t.applies += 1;
        match apply_event(s, &alphabet[i].2) {
            Err(_) => {
                t.errors += 1;
                if fingerprint(s) != before {
                    t.partial_errors += 1;
                }
                if predicted.is_some() {
                    t.model_mismatches += 1;
                }
                // a rejected event leaves the state as it was; the rest of
                // the sequence continues from there
                explore(s, facts, depth - 1, alphabet, t);
            }
            Ok((next, _)) => {
                let got_pending = next.pending_proposals.contains_key(&DimensionField::Height);
                if predicted != Some((next.phase, got_pending)) || next.applied_seq != s.applied_seq + 1 {
                    t.model_mismatches += 1;
                }
                let mut f = facts;
                match next.phase {
                    Phase::Drafting => f = PathFacts { accepted: false, reviewed: false },
                    Phase::UserAccepted if s.phase == Phase::Drafting => {
                        f.accepted = sym == Sym::UserAccept && role == Role::User
                    }
                    Phase::UnderReview => f.reviewed = f.accepted,
                    Phase::Approved if s.phase != Phase::Approved => {
                        t.approvals += 1;
                        if !(f.accepted && f.reviewed && s.phase == Phase::UnderReview) {
                            t.unsafe_approvals += 1;
                        }
                    }
                    _ => {}
                }
                explore(&next, f, depth - 1, alphabet, t);
            }
        }
    }
}

fn state_machine_safety() -> Check {
    let mut s = new_session(&SessionConfig::default());
    for (i, role) in Role::ALL.iter().enumerate() {
        let join = SessionEvent::new(i as u64 + 1, participant(*role), EventKind::Join { role: *role });
        s = apply_event(&s, &join).map_err(|e| e.to_string())?.0;
    }
    let mut alphabet = Vec::new();
    for sym in SYMS {
        for role in Role::ALL {
            let kind = match sym {
                Sym::ProposeDim => EventKind::ProposeDimension {
                    field: DimensionField::Height,
                    value: HEIGHT,
                },
                Sym::ConfirmDim => EventKind::ConfirmDimension {
                    field: DimensionField::Height,
                    value: HEIGHT,
                },
                Sym::UserAccept => EventKind::UserAccept,
                Sym::ErgoRequestPose => EventKind::ErgoRequestPose { label: "pose".into() },
                Sym::ErgoApprove => EventKind::ErgoApprove,
                Sym::ErgoReject => EventKind::ErgoReject { reason: "no".into() },
            };
            alphabet.push((sym, role, SessionEvent::new(0, participant(role), kind)));
        }
    }
    let mut t = Tally::default();
    explore(
        &s,
        PathFacts {
            accepted: false,
            reviewed: false,
        },
        6,
        &mut alphabet,
        &mut t,
    );
    let expected: u64 = (0..=6).map(|k| 18u64.pow(k)).sum();
    ensure(t.sequences == expected, || format!("enumerated {} sequences, expected {expected}", t.sequences))?;
    ensure(t.approvals > 0, || "no sequence reached Approved".into())?;
    ensure(t.unsafe_approvals == 0, || format!("{} unsafe approvals", t.unsafe_approvals))?;
    ensure(t.partial_errors == 0, || format!("{} partially applied errors", t.partial_errors))?;
    ensure(t.model_mismatches == 0, || format!("{} disagreements with the phase table", t.model_mismatches))?;
    Ok(format!(
        "{} sequences, {} applies ({} rejected), {} approvals, 0 unsafe, 0 partial",
        t.sequences, t.applies, t.errors, t.approvals
    ))
}

// ---------------------------------------------------------------------------

struct Peer {
    role: Role,
    rx: ClientRx,
    tx: ClientTx,
    connection: u64,
    replica: Replica,
    seqs: Vec<u64>,
    rng: ChaCha8Rng,
    pose_t: u64,
}

impl Peer {
    fn absorb(&mut self, d: &Delta) -> Result<(), String> {
        self.seqs.push(d.seq);
        self.replica.apply(d).map(|_| ()).map_err(|e| format!("{}: {e}", self.role))
    }

    fn next_kind(&mut self) -> EventKind {
        let fields = DimensionField::ALL;
        let r = self.rng.gen_range(0..100);
        match self.role {
            Role::User => {
                let pending: Vec<(DimensionField, f64)> =
                    self.replica.state.pending_proposals.iter().map(|(f, p)| (*f, p.value)).collect();
                if r < 45 {
                    self.pose_t += self.rng.gen_range(20..60);
                    let mut p = SynthParams::new(Posture::symmetric(
                        self.rng.gen_range(0.0..25.0),
                        self.rng.gen_range(0.0..25.0),
                        self.rng.gen_range(0.0..50.0),
                        self.rng.gen_range(60.0..120.0),
                    ));
                    p.t_ms = self.pose_t;
                    p.placement = RigidTransform::translation(Vec3::new(0.0, 0.48, -0.4));
                    EventKind::PoseUpdate {
                        frame: synth_pose(&p).unwrap(),
                    }
                } else if r < 70 && !pending.is_empty() {
                    let (field, value) = pending[self.rng.gen_range(0..pending.len())];
                    EventKind::ConfirmDimension { field, value }
                } else if r < 80 {
                    // usually stale: raced by another proposal
                    EventKind::ConfirmDimension {
                        field: fields[self.rng.gen_range(0..4)],
                        value: 0.7,
                    }
                } else if r < 95 {
                    EventKind::UserAccept
                } else {
                    EventKind::ErgoApprove
                }
            }
            Role::Designer => {
                if r < 80 {
                    let field = fields[self.rng.gen_range(0..4)];
                    let b = self.replica.state.workstation.bounds.get(field);
                    // a few land out of bounds
                    let value = self.rng.gen_range(b.min - 0.05..b.max + 0.05);
                    EventKind::ProposeDimension { field, value }
                } else if r < 95 {
                    EventKind::SetColor {
                        color: [self.rng.gen(), self.rng.gen(), self.rng.gen()],
                    }
                } else {
                    EventKind::UserAccept
                }
            }
            Role::Ergonomist => match r {
                0..=39 => EventKind::ErgoRequestPose { label: format!("pose {r}") },
                40..=69 => EventKind::ErgoApprove,
                70..=94 => EventKind::ErgoReject { reason: "posture".into() },
                _ => EventKind::SetColor { color: [0, 0, 0] },
            },
        }
    }

    /// Sends `n` events, each one after the previous was answered.
    async fn drive(mut self, n: usize) -> Result<(Peer, usize), String> {
        let mut applied = 0;
        for _ in 0..n {
            let kind = self.next_kind();
            let token = self.tx.event(kind).await.map_err(|e| e.to_string())?;
            loop {
                let env = recv_within(&mut self.rx).await?;
                match env.message {
                    WireMessage::Delta(d) => {
                        self.absorb(&d)?;
                        if d.origin.is_some_and(|o| o.connection == self.connection && o.token == token) {
                            applied += 1;
                            break;
                        }
                    }
                    WireMessage::Error(e) if e.token == Some(token) => break,
                    WireMessage::Error(e) => return Err(format!("{}: unexpected error {e:?}", self.role)),
                    _ => {}
                }
            }
            if self.rng.gen_bool(0.3) {
                tokio::task::yield_now().await;
            }
        }
        Ok((self, applied))
    }

    async fn catch_up(&mut self, seq: u64) -> Result<(), String> {
        while self.replica.state.applied_seq < seq {
            if let WireMessage::Delta(d) = recv_within(&mut self.rx).await?.message {
                self.absorb(&d)?;
            }
        }
        Ok(())
    }
}

async fn recv_within(rx: &mut ClientRx) -> Result<coaug_server::protocol::Envelope, String> {
    tokio::time::timeout(Duration::from_secs(10), rx.recv())
        .await
        .map_err(|_| "timed out waiting for the server".to_string())?
        .map_err(|e| e.to_string())
}

async fn replicated_convergence() -> Check {
    const SEED: u64 = 500;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let session = SessionConfig {
        session_id: "convergence".into(),
        ..SessionConfig::default()
    };
    let mut config = ServerConfig::ephemeral(session.clone());
    config.log_dir = Some(dir.path().to_owned());
    let server = serve(config).await.map_err(|e| e.to_string())?;
    let log_path = server.log_path().unwrap().to_owned();

    let mut peers = Vec::new();
    for (i, role) in Role::ALL.into_iter().enumerate() {
        let mut c = Client::connect(server.tcp_addr()).await.map_err(|e| e.to_string())?;
        let ack = c.hello(role, None).await.map_err(|e| e.to_string())?;
        let (rx, tx) = c.into_split();
        peers.push(Peer {
            role,
            rx,
            tx,
            connection: ack.connection,
            replica: Replica::from_ack(&ack),
            seqs: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(SEED + i as u64),
            pose_t: 0,
        });
    }
    let counts = [167, 167, 166];
    let tasks: Vec<_> = peers.into_iter().zip(counts).map(|(p, n)| tokio::spawn(p.drive(n))).collect();
    let mut peers = Vec::new();
    let mut applied = 0;
    for t in tasks {
        let (p, a) = t.await.map_err(|e| e.to_string())??;
        applied += a;
        peers.push(p);
    }
    let state = server.state().await.map_err(|e| e.to_string())?;
    let server_snap = snapshot(&state);
    for p in &mut peers {
        p.catch_up(state.applied_seq).await?;
        ensure(snapshot(&p.replica.state) == server_snap, || format!("{} snapshot differs", p.role))?;
        let first = p.seqs[0];
        let want: Vec<u64> = (first..=state.applied_seq).collect();
        ensure(p.seqs == want, || format!("{} saw a gap or reordering", p.role))?;
    }

    // crash, then rebuild from what reached the disk
    server.abort();
    let events = parse_event_log(&std::fs::read(&log_path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let rebuilt = replay(&session, &events).map_err(|e| e.to_string())?;
    ensure(snapshot(&rebuilt) == server_snap, || "replayed log differs from the live state".into())?;
    drop(peers);
    Ok(format!(
        "500 events ({applied} applied, {} rejected), 3 replicas byte-identical through seq {}, log replay matches",
        500 - applied,
        state.applied_seq
    ))
}

// ---------------------------------------------------------------------------

fn coaug(args: &[&str]) -> Result<std::process::Output, String> {
    std::process::Command::new(env!("CARGO_BIN_EXE_coaug"))
        .args(args)
        .env_remove("COAUG_LOG_DIR")
        .env("RUST_LOG", "off")
        .output()
        .map_err(|e| e.to_string())
}

fn end_to_end() -> Check {
    let script = bundled("sitting_approval.yaml");
    let mut transcripts = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out_file = dir.path().join("transcript.json");
        let out = coaug(&[
            "scenario",
            "run",
            script.to_str().unwrap(),
            "--log-dir",
            dir.path().to_str().unwrap(),
            "--transcript",
            out_file.to_str().unwrap(),
        ])?;
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        ensure(out.status.success(), || format!("exit {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr)))?;
        ensure(stdout.lines().any(|l| l == "phase: Approved"), || format!("stdout: {stdout}"))?;
        transcripts.push(std::fs::read(out_file).map_err(|e| e.to_string())?);
    }
    ensure(transcripts[0] == transcripts[1], || "transcripts differ between runs".into())?;

    let t: serde_json::Value = serde_json::from_slice(&transcripts[0]).map_err(|e| e.to_string())?;
    ensure(t["final_snapshot"]["phase"] == "approved", || format!("phase {}", t["final_snapshot"]["phase"]))?;
    let session: SessionConfig =
        serde_json::from_slice(&std::fs::read(bundled("session.json")).unwrap()).map_err(|e| e.to_string())?;
    let b = session.workstation.bounds.height_m;
    let h = t["final_snapshot"]["workstation"]["height_m"].as_f64().unwrap_or(f64::NAN);
    ensure(b.min <= h && h <= b.max, || format!("height {h} outside [{}, {}]", b.min, b.max))?;
    let reports = t["reports"].as_array().ok_or("no reports")?;
    ensure(reports.len() >= 30, || format!("only {} reports", reports.len()))?;
    let tail_violations: usize = reports[reports.len() - 30..]
        .iter()
        .map(|r| r["violations"].as_array().map_or(usize::MAX, Vec::len))
        .sum();
    ensure(tail_violations == 0, || format!("{tail_violations} violations in the final 30 reports"))?;
    Ok(format!("Approved at height {h} m, final 30 reports clean, transcripts byte-identical"))
}

fn cli_contract() -> Check {
    let path = bundled("sitting_typist.csv");
    let out = coaug(&["ergo-eval", path.to_str().unwrap()])?;
    ensure(out.status.success(), || format!("exit {:?}", out.status))?;
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let reports: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    ensure(reports.len() == 300, || format!("{} reports", reports.len()))?;

    // offline: parse the file here and evaluate each frame in the shared frame
    let stream = parse_pose_stream(&std::fs::read(&path).unwrap(), PoseFormat::Csv).map_err(|e| e.to_string())?;
    let desk = default_workstation(WorkstationType::SittingDesk);
    let mut want = 0usize;
    for f in &stream.frames {
        let shared = PoseFrame::new(f.timestamp_ms(), f.mode(), FrameTag::Shared, f.joints().clone()).unwrap();
        want += evaluate(&shared, &desk, GuidelineSpec::shipped()).map_err(|e| e.to_string())?.violation_count();
    }
    let mut got = 0usize;
    for line in &reports {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let verdicts = v["verdicts"].as_object().ok_or("report without verdicts")?;
        got += verdicts.values().filter(|x| x["status"] == "violation").count();
    }
    ensure(got == want, || format!("emitted {got} violations, offline oracle {want}"))?;
    let summary = text.lines().find(|l| l.starts_with("# summary:")).ok_or("no summary line")?;
    ensure(summary.contains(&format!(", {want} violations")), || summary.to_owned())?;
    Ok(format!("300 reports, {want} violations in both"))
}

// ---------------------------------------------------------------------------

fn main() {
    // let `cargo test -- <filter>` style arguments through harmlessly
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Check>)> = vec![
        ("elbow guideline fidelity", Duration::from_secs(1), Box::new(elbow_guideline_fidelity)),
        ("angle oracle equivalence", Duration::from_secs(5), Box::new(angle_oracle_equivalence)),
        ("calibration rigidity", Duration::from_secs(5), Box::new(calibration_rigidity)),
        ("state-machine safety", Duration::from_secs(30), Box::new(state_machine_safety)),
        ("replicated convergence", Duration::from_secs(30), Box::new(|| rt.block_on(replicated_convergence()))),
        ("end-to-end scenario", Duration::from_secs(10), Box::new(end_to_end)),
        ("cli contract", Duration::from_secs(10), Box::new(cli_contract)),
    ];
    let mut failed = 0;
    let mut results = BTreeMap::new();
    for (name, limit, check) in &criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > *limit => Err(format!("{detail}; took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        let line = match &outcome {
            Ok(detail) => format!("PASS  {name} ({took:.2?}, limit {limit:?}): {detail}"),
            Err(why) => {
                failed += 1;
                format!("FAIL  {name} ({took:.2?}, limit {limit:?}): {why}")
            }
        };
        println!("{line}");
        results.insert(*name, outcome.is_ok());
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
