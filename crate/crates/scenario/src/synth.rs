//! Builds skeletons whose ergonomic angles are known by construction.
//!
//! The body is laid out in the sagittal plane through the spine (x is the
//! person's left, +y up, +z forward), then moved by `placement`. Trunk lean
//! tilts the spine forward; the head continues past the spine line by the
//! neck angle; each upper arm swings forward from the downward trunk
//! direction; each forearm opens from the upper arm by the interior elbow
//! angle, flexing forward and up.

use std::collections::BTreeMap;

use coaug_core::geometry::{RigidTransform, Vec3};
use coaug_core::skeleton::{FrameTag, JointId, PoseFrame, TrackingMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("{name} must be a finite length > 0, got {value}")]
    Length { name: &'static str, value: f64 },
    #[error("{name} must be within [0, 180] degrees, got {value}")]
    Angle { name: &'static str, value: f64 },
    #[error("placement contains non-finite values")]
    Placement,
}

/// Segment lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodyDims {
    /// SpineBase to SpineShoulder.
    pub trunk_m: f64,
    pub neck_m: f64,
    pub head_m: f64,
    /// SpineShoulder to each shoulder, sideways.
    pub shoulder_half_width_m: f64,
    pub upper_arm_m: f64,
    pub forearm_m: f64,
    pub hand_m: f64,
    pub hand_tip_m: f64,
    pub hip_half_width_m: f64,
    pub thigh_m: f64,
    pub shin_m: f64,
    pub foot_m: f64,
}

impl Default for BodyDims {
    fn default() -> Self {
        BodyDims {
            trunk_m: 0.50,
            neck_m: 0.08,
            head_m: 0.12,
            shoulder_half_width_m: 0.18,
            upper_arm_m: 0.30,
            forearm_m: 0.26,
            hand_m: 0.08,
            hand_tip_m: 0.06,
            hip_half_width_m: 0.09,
            thigh_m: 0.43,
            shin_m: 0.42,
            foot_m: 0.15,
        }
    }
}

impl BodyDims {
    fn lengths(&self) -> [(&'static str, f64); 12] {
        [
            ("trunk_m", self.trunk_m),
            ("neck_m", self.neck_m),
            ("head_m", self.head_m),
            ("shoulder_half_width_m", self.shoulder_half_width_m),
            ("upper_arm_m", self.upper_arm_m),
            ("forearm_m", self.forearm_m),
            ("hand_m", self.hand_m),
            ("hand_tip_m", self.hand_tip_m),
            ("hip_half_width_m", self.hip_half_width_m),
            ("thigh_m", self.thigh_m),
            ("shin_m", self.shin_m),
            ("foot_m", self.foot_m),
        ]
    }

    /// Shoulder to hand along a straight arm.
    pub fn arm_length(&self) -> f64 {
        self.upper_arm_m + self.forearm_m + self.hand_m
    }
}

/// Requested angles in degrees, using the same definitions as the
/// ergonomics measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Posture {
    pub trunk_deg: f64,
    pub neck_deg: f64,
    pub upper_arm_l_deg: f64,
    pub upper_arm_r_deg: f64,
    pub elbow_l_deg: f64,
    pub elbow_r_deg: f64,
}

impl Posture {
    /// Same arm angles on both sides.
    pub fn symmetric(trunk_deg: f64, neck_deg: f64, upper_arm_deg: f64, elbow_deg: f64) -> Self {
        Posture {
            trunk_deg,
            neck_deg,
            upper_arm_l_deg: upper_arm_deg,
            upper_arm_r_deg: upper_arm_deg,
            elbow_l_deg: elbow_deg,
            elbow_r_deg: elbow_deg,
        }
    }

    fn angles(&self) -> [(&'static str, f64); 6] {
        [
            ("trunk_deg", self.trunk_deg),
            ("neck_deg", self.neck_deg),
            ("upper_arm_l_deg", self.upper_arm_l_deg),
            ("upper_arm_r_deg", self.upper_arm_r_deg),
            ("elbow_l_deg", self.elbow_l_deg),
            ("elbow_r_deg", self.elbow_r_deg),
        ]
    }

    /// Componentwise blend, `s` in [0, 1].
    pub fn lerp(&self, other: &Posture, s: f64) -> Posture {
        let mix = |a: f64, b: f64| a + (b - a) * s;
        Posture {
            trunk_deg: mix(self.trunk_deg, other.trunk_deg),
            neck_deg: mix(self.neck_deg, other.neck_deg),
            upper_arm_l_deg: mix(self.upper_arm_l_deg, other.upper_arm_l_deg),
            upper_arm_r_deg: mix(self.upper_arm_r_deg, other.upper_arm_r_deg),
            elbow_l_deg: mix(self.elbow_l_deg, other.elbow_l_deg),
            elbow_r_deg: mix(self.elbow_r_deg, other.elbow_r_deg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub body: BodyDims,
    pub posture: Posture,
    pub mode: TrackingMode,
    pub t_ms: u64,
    /// Moves the constructed body (SpineBase starts at the origin).
    pub placement: RigidTransform,
}

impl SynthParams {
    pub fn new(posture: Posture) -> Self {
        SynthParams {
            body: BodyDims::default(),
            posture,
            mode: TrackingMode::Sitting,
            t_ms: 0,
            placement: RigidTransform::IDENTITY,
        }
    }
}

fn unit_in_plane(deg_from_up: f64) -> Vec3 {
    let r = deg_from_up.to_radians();
    Vec3::new(0.0, r.cos(), r.sin())
}

/// Builds a shared-frame pose. For sitting mode the leg joints are omitted.
pub fn synth_pose(p: &SynthParams) -> Result<PoseFrame, SynthesisError> {
    for (name, value) in p.body.lengths() {
        if !(value.is_finite() && value > 0.0) {
            return Err(SynthesisError::Length { name, value });
        }
    }
    for (name, value) in p.posture.angles() {
        if !(value.is_finite() && (0.0..=180.0).contains(&value)) {
            return Err(SynthesisError::Angle { name, value });
        }
    }
    if !(p.placement.translation.is_finite() && p.placement.rotation.to_array().iter().all(|c| c.is_finite())) {
        return Err(SynthesisError::Placement);
    }

    use JointId::*;
    let b = &p.body;
    let t = p.posture.trunk_deg;
    let trunk = unit_in_plane(t);
    let forward = unit_in_plane(t + 90.0);
    let down = -trunk;

    let mut j = BTreeMap::new();
    let base = Vec3::ZERO;
    let top = base + trunk * b.trunk_m;
    let neck = top + trunk * b.neck_m;
    j.insert(SpineBase, base);
    j.insert(SpineMid, base + trunk * (0.5 * b.trunk_m));
    j.insert(SpineShoulder, top);
    j.insert(Neck, neck);
    j.insert(Head, neck + unit_in_plane(t + p.posture.neck_deg) * b.head_m);

    let arms = [
        (1.0, p.posture.upper_arm_l_deg, p.posture.elbow_l_deg, [ShoulderL, ElbowL, WristL, HandL, HandTipL, ThumbL]),
        (-1.0, p.posture.upper_arm_r_deg, p.posture.elbow_r_deg, [ShoulderR, ElbowR, WristR, HandR, HandTipR, ThumbR]),
    ];
    for (sign, a_deg, e_deg, [sh, el, wr, ha, tip, th]) in arms {
        let (sa, ca) = a_deg.to_radians().sin_cos();
        let (se, ce) = e_deg.to_radians().sin_cos();
        let upper = down * ca + forward * sa;
        // perpendicular to `upper` in the plane, equal to `forward` when the arm hangs
        let bend = trunk * sa + forward * ca;
        let fore = -upper * ce + bend * se;
        let shoulder = top + Vec3::X * (sign * b.shoulder_half_width_m);
        let elbow = shoulder + upper * b.upper_arm_m;
        let wrist = elbow + fore * b.forearm_m;
        let hand = wrist + fore * b.hand_m;
        j.insert(sh, shoulder);
        j.insert(el, elbow);
        j.insert(wr, wrist);
        j.insert(ha, hand);
        j.insert(tip, hand + fore * b.hand_tip_m);
        j.insert(th, hand + Vec3::X * (-sign * 0.03) + fore * 0.02);
    }

    if p.mode == TrackingMode::Standing {
        for (sign, [hip, knee, ankle, foot]) in [(1.0, [HipL, KneeL, AnkleL, FootL]), (-1.0, [HipR, KneeR, AnkleR, FootR])] {
            let h = base + Vec3::X * (sign * b.hip_half_width_m);
            let k = h - Vec3::Y * b.thigh_m;
            let a = k - Vec3::Y * b.shin_m;
            j.insert(hip, h);
            j.insert(knee, k);
            j.insert(ankle, a);
            j.insert(foot, a + Vec3::Z * b.foot_m);
        }
    }

    let joints = j.into_iter().map(|(id, v)| (id, p.placement.apply(v))).collect();
    Ok(PoseFrame::new(p.t_ms, p.mode, FrameTag::Shared, joints).expect("constructed frame has every joint"))
}
