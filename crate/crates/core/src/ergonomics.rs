//! Posture angles, clearance and reach measured on a shared-frame pose,
//! classified against person-centered guidelines.
//!
//! Every angle is `angle_between` applied to two vectors built from the
//! pose; see each function for which two.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_between, GeometryError, Vec3};
use crate::skeleton::{FrameTag, JointId, PoseFrame, SkeletonError};
use crate::workstation::WorkstationSpec;

const DEFAULT_GUIDELINES: &str = include_str!("../config/guidelines.json");

/// Default eye position relative to the Head joint, in meters.
pub const DEFAULT_EYE_OFFSET: Vec3 = Vec3::new(0.0, 0.05, 0.08);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ErgonomicsError {
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("pose must be in the shared frame")]
    SensorFrame,
    #[error("invalid guideline config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    fn arm(self) -> [JointId; 4] {
        match self {
            Side::Left => [JointId::ShoulderL, JointId::ElbowL, JointId::WristL, JointId::HandL],
            Side::Right => [JointId::ShoulderR, JointId::ElbowR, JointId::WristR, JointId::HandR],
        }
    }

    pub fn shoulder(self) -> JointId {
        self.arm()[0]
    }
    pub fn elbow(self) -> JointId {
        self.arm()[1]
    }
    pub fn wrist(self) -> JointId {
        self.arm()[2]
    }
    pub fn hand(self) -> JointId {
        self.arm()[3]
    }
}

/// Interior elbow angle between the upper arm and the forearm. 180 is a
/// straight arm.
pub fn lower_arm_flexion(f: &PoseFrame, side: Side) -> Result<f64, ErgonomicsError> {
    let to_shoulder = f.bone(side.elbow(), side.shoulder())?;
    let to_wrist = f.bone(side.elbow(), side.wrist())?;
    Ok(angle_between(to_shoulder, to_wrist)?)
}

/// Upper arm against the downward trunk direction; 0 when the arm hangs
/// parallel to the trunk.
pub fn upper_arm_flexion(f: &PoseFrame, side: Side) -> Result<f64, ErgonomicsError> {
    let arm = f.bone(side.shoulder(), side.elbow())?;
    let down_trunk = -f.bone(JointId::SpineBase, JointId::SpineShoulder)?;
    Ok(angle_between(arm, down_trunk)?)
}

/// Spine (SpineBase to SpineShoulder) against world up.
pub fn trunk_flexion(f: &PoseFrame) -> Result<f64, ErgonomicsError> {
    let spine = f.bone(JointId::SpineBase, JointId::SpineShoulder)?;
    Ok(angle_between(spine, Vec3::Y)?)
}

/// Head segment against the continuation of the upper spine.
pub fn neck_flexion(f: &PoseFrame) -> Result<f64, ErgonomicsError> {
    let upper_spine = f.bone(JointId::SpineShoulder, JointId::Neck)?;
    let head = f.bone(JointId::Neck, JointId::Head)?;
    Ok(angle_between(head, upper_spine)?)
}

pub fn eye_point(f: &PoseFrame, eye_offset: Vec3) -> Result<Vec3, ErgonomicsError> {
    Ok(f.joint(JointId::Head)? + eye_offset)
}

/// Signed gaze elevation toward `monitor_center`: positive below the
/// horizontal (looking down), negative above.
pub fn gaze_depression(f: &PoseFrame, monitor_center: Vec3, eye_offset: Vec3) -> Result<f64, ErgonomicsError> {
    let gaze = monitor_center - eye_point(f, eye_offset)?;
    Ok(angle_between(gaze, Vec3::Y)? - 90.0)
}

/// Magnitude of the gaze angle from the horizontal plane: 0 looking
/// straight ahead, 90 looking straight down (or up).
pub fn viewpoint_angle(f: &PoseFrame, monitor_center: Vec3, eye_offset: Vec3) -> Result<f64, ErgonomicsError> {
    Ok(gaze_depression(f, monitor_center, eye_offset)?.abs())
}

pub const TORSO: [JointId; 3] = [JointId::SpineBase, JointId::SpineMid, JointId::SpineShoulder];

/// Smallest signed horizontal distance from a torso joint to the desk's
/// front-edge plane; negative once the torso is past the edge.
pub fn body_clearance(f: &PoseFrame, w: &WorkstationSpec) -> Result<f64, ErgonomicsError> {
    let plane = w.front_edge_plane();
    let mut best = f64::INFINITY;
    for j in TORSO {
        best = best.min(plane.signed_distance(f.joint(j)?));
    }
    Ok(best)
}

/// Shoulder-to-target distance and the arm length it is compared with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reach {
    pub distance: f64,
    pub limit: f64,
}

impl Reach {
    pub fn ok(&self) -> bool {
        self.distance <= self.limit
    }
}

pub fn reach(f: &PoseFrame, target: Vec3, side: Side, margin_factor: f64) -> Result<Reach, ErgonomicsError> {
    let shoulder = f.joint(side.shoulder())?;
    let elbow = f.joint(side.elbow())?;
    let wrist = f.joint(side.wrist())?;
    let hand = f.joint(side.hand())?;
    let arm = shoulder.distance(elbow) + elbow.distance(wrist) + wrist.distance(hand);
    Ok(Reach {
        distance: shoulder.distance(target),
        limit: arm * margin_factor,
    })
}

/// True iff `target` is within the summed arm segment length (scaled by
/// `margin_factor`) of the shoulder. Inclusive.
pub fn reach_ok(f: &PoseFrame, target: Vec3, side: Side, margin_factor: f64) -> Result<bool, ErgonomicsError> {
    Ok(reach(f, target, side, margin_factor)?.ok())
}

/// Slack applied to guideline bounds so a measurement that is exactly on a
/// bound up to floating-point rounding counts as inside.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// Inclusive range; either end may be open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allowed {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max: Option<f64>,
}

impl Allowed {
    pub fn range(min: f64, max: f64) -> Self {
        Allowed {
            min: Some(min),
            max: Some(max),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min.is_none_or(|m| m - BOUND_TOLERANCE <= v) && self.max.is_none_or(|m| v <= m + BOUND_TOLERANCE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct DegreeRange {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for DegreeRange {
    fn from(a: [f64; 2]) -> Self {
        DegreeRange { min: a[0], max: a[1] }
    }
}

impl From<DegreeRange> for [f64; 2] {
    fn from(r: DegreeRange) -> Self {
        [r.min, r.max]
    }
}

/// Guideline ranges; a measure without a configured range gets no verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidelineSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_arm_deg: Option<DegreeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_arm_deg: Option<DegreeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunk_deg: Option<DegreeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neck_deg: Option<DegreeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewpoint_deg: Option<DegreeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_clearance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach_margin_factor: Option<f64>,
    #[serde(default = "default_eye_offset")]
    pub eye_offset_m: Vec3,
}

fn default_eye_offset() -> Vec3 {
    DEFAULT_EYE_OFFSET
}

impl Default for GuidelineSpec {
    fn default() -> Self {
        GuidelineSpec::shipped().clone()
    }
}

impl GuidelineSpec {
    pub fn shipped() -> &'static GuidelineSpec {
        static G: OnceLock<GuidelineSpec> = OnceLock::new();
        G.get_or_init(|| GuidelineSpec::from_json(DEFAULT_GUIDELINES).expect("shipped guidelines are valid"))
    }

    pub fn from_json(s: &str) -> Result<Self, ErgonomicsError> {
        let g: GuidelineSpec = serde_json::from_str(s).map_err(|e| ErgonomicsError::Config(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ErgonomicsError> {
        for m in Measure::ALL {
            if let Some(r) = self.angle_range(m) {
                if !(r.min.is_finite() && r.max.is_finite() && r.min <= r.max) {
                    return Err(ErgonomicsError::Config(format!("range for {m} must satisfy min <= max")));
                }
            }
        }
        if let Some(c) = self.min_clearance_m {
            if !(c.is_finite() && c >= 0.0) {
                return Err(ErgonomicsError::Config("min_clearance_m must be >= 0".into()));
            }
        }
        if let Some(r) = self.reach_margin_factor {
            if !(r.is_finite() && r > 0.0) {
                return Err(ErgonomicsError::Config("reach_margin_factor must be > 0".into()));
            }
        }
        if !self.eye_offset_m.is_finite() {
            return Err(ErgonomicsError::Config("eye_offset_m must be finite".into()));
        }
        Ok(())
    }

    fn angle_range(&self, m: Measure) -> Option<DegreeRange> {
        match m {
            Measure::LowerArmL | Measure::LowerArmR => self.lower_arm_deg,
            Measure::UpperArmL | Measure::UpperArmR => self.upper_arm_deg,
            Measure::Trunk => self.trunk_deg,
            Measure::Neck => self.neck_deg,
            Measure::Viewpoint => self.viewpoint_deg,
            _ => None,
        }
    }

    /// Measures that receive a verdict under this guideline.
    pub fn measures(&self) -> Vec<Measure> {
        Measure::ALL
            .into_iter()
            .filter(|&m| match m {
                Measure::BodyClearance => self.min_clearance_m.is_some(),
                Measure::ReachL | Measure::ReachR => self.reach_margin_factor.is_some(),
                _ => self.angle_range(m).is_some(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Viewpoint,
    UpperArmL,
    UpperArmR,
    LowerArmL,
    LowerArmR,
    Trunk,
    Neck,
    BodyClearance,
    ReachL,
    ReachR,
}

impl Measure {
    pub const ALL: [Measure; 10] = [
        Measure::Viewpoint,
        Measure::UpperArmL,
        Measure::UpperArmR,
        Measure::LowerArmL,
        Measure::LowerArmR,
        Measure::Trunk,
        Measure::Neck,
        Measure::BodyClearance,
        Measure::ReachL,
        Measure::ReachR,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Viewpoint => "viewpoint",
            Measure::UpperArmL => "upper_arm_l",
            Measure::UpperArmR => "upper_arm_r",
            Measure::LowerArmL => "lower_arm_l",
            Measure::LowerArmR => "lower_arm_r",
            Measure::Trunk => "trunk",
            Measure::Neck => "neck",
            Measure::BodyClearance => "body_clearance",
            Measure::ReachL => "reach_l",
            Measure::ReachR => "reach_r",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Compliant,
    Violation { measured: f64, allowed: Allowed },
    Unavailable { reason: String },
}

impl Verdict {
    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::Violation { .. })
    }

    fn classify(measured: f64, allowed: Allowed) -> Verdict {
        if allowed.contains(measured) {
            Verdict::Compliant
        } else {
            Verdict::Violation { measured, allowed }
        }
    }
}

/// Measured angles in degrees; `None` when the measure could not be taken.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AngleSet {
    pub viewpoint_deg: Option<f64>,
    pub upper_arm_l_deg: Option<f64>,
    pub upper_arm_r_deg: Option<f64>,
    pub lower_arm_l_deg: Option<f64>,
    pub lower_arm_r_deg: Option<f64>,
    pub trunk_flexion_deg: Option<f64>,
    pub neck_flexion_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReachFlags {
    pub left: Option<bool>,
    pub right: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgonomicReport {
    pub t_ms: u64,
    pub angles: AngleSet,
    pub body_clearance_m: Option<f64>,
    pub reach_ok: ReachFlags,
    pub verdicts: BTreeMap<Measure, Verdict>,
}

impl ErgonomicReport {
    pub fn violations(&self) -> impl Iterator<Item = (Measure, &Verdict)> {
        self.verdicts
            .iter()
            .filter(|(_, v)| v.is_violation())
            .map(|(m, v)| (*m, v))
    }

    pub fn violation_count(&self) -> usize {
        self.violations().count()
    }

    pub fn is_compliant(&self) -> bool {
        self.violation_count() == 0
    }
}

fn reason(e: &ErgonomicsError) -> String {
    e.to_string()
}

/// Evaluates every measure on a shared-frame pose. A measure that cannot
/// be computed is reported as `Unavailable` without failing the others.
pub fn evaluate(f: &PoseFrame, w: &WorkstationSpec, g: &GuidelineSpec) -> Result<ErgonomicReport, ErgonomicsError> {
    if f.frame_tag() != FrameTag::Shared {
        return Err(ErgonomicsError::SensorFrame);
    }
    let monitor = w.monitor_center_shared();
    let keyboard = w.keyboard_center_shared();
    let margin = g.reach_margin_factor.unwrap_or(1.0);

    let mut results: BTreeMap<Measure, Result<f64, ErgonomicsError>> = BTreeMap::new();
    results.insert(Measure::Viewpoint, viewpoint_angle(f, monitor, g.eye_offset_m));
    results.insert(Measure::UpperArmL, upper_arm_flexion(f, Side::Left));
    results.insert(Measure::UpperArmR, upper_arm_flexion(f, Side::Right));
    results.insert(Measure::LowerArmL, lower_arm_flexion(f, Side::Left));
    results.insert(Measure::LowerArmR, lower_arm_flexion(f, Side::Right));
    results.insert(Measure::Trunk, trunk_flexion(f));
    results.insert(Measure::Neck, neck_flexion(f));
    results.insert(Measure::BodyClearance, body_clearance(f, w));

    let reach_l = reach(f, keyboard, Side::Left, margin);
    let reach_r = reach(f, keyboard, Side::Right, margin);

    let ok = |m: Measure| results[&m].as_ref().ok().copied();
    let angles = AngleSet {
        viewpoint_deg: ok(Measure::Viewpoint),
        upper_arm_l_deg: ok(Measure::UpperArmL),
        upper_arm_r_deg: ok(Measure::UpperArmR),
        lower_arm_l_deg: ok(Measure::LowerArmL),
        lower_arm_r_deg: ok(Measure::LowerArmR),
        trunk_flexion_deg: ok(Measure::Trunk),
        neck_flexion_deg: ok(Measure::Neck),
    };

    let mut verdicts = BTreeMap::new();
    for m in g.measures() {
        let v = match m {
            Measure::ReachL | Measure::ReachR => {
                let r = if m == Measure::ReachL { &reach_l } else { &reach_r };
                match r {
                    Ok(r) => Verdict::classify(
                        r.distance,
                        Allowed {
                            min: None,
                            max: Some(r.limit),
                        },
                    ),
                    Err(e) => Verdict::Unavailable { reason: reason(e) },
                }
            }
            Measure::BodyClearance => match &results[&m] {
                Ok(c) => Verdict::classify(
                    *c,
                    Allowed {
                        min: g.min_clearance_m,
                        max: None,
                    },
                ),
                Err(e) => Verdict::Unavailable { reason: reason(e) },
            },
            _ => {
                let range = g.angle_range(m).expect("measure listed by guideline");
                match &results[&m] {
                    Ok(a) => Verdict::classify(*a, Allowed::range(range.min, range.max)),
                    Err(e) => Verdict::Unavailable { reason: reason(e) },
                }
            }
        };
        verdicts.insert(m, v);
    }

    Ok(ErgonomicReport {
        t_ms: f.timestamp_ms(),
        angles,
        body_clearance_m: ok(Measure::BodyClearance),
        reach_ok: ReachFlags {
            left: reach_l.as_ref().ok().map(Reach::ok),
            right: reach_r.as_ref().ok().map(Reach::ok),
        },
        verdicts,
    })
}
