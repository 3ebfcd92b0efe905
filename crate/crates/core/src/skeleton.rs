//! Skeleton topology, pose frames and their re-projection into the shared
//! frame.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkeletonError {
    #[error("missing joint {joint}{}", line_suffix(*.line))]
    MissingJoint { joint: JointId, line: Option<usize> },
    #[error("timestamp does not increase at line {line}")]
    TimestampOrder { line: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-finite position for joint {0}")]
    NonFinite(JointId),
    #[error("frame is already in the shared frame")]
    FrameTag,
}

fn line_suffix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

macro_rules! joints {
    ($($name:ident),* $(,)?) => {
        /// Joints of the 25-joint depth-sensor skeleton, in canonical order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum JointId {
            $($name),*
        }

        impl JointId {
            pub const ALL: [JointId; 25] = [$(JointId::$name),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(JointId::$name => stringify!($name)),*
                }
            }
        }

        impl FromStr for JointId {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $(stringify!($name) => Ok(JointId::$name),)*
                    other => Err(format!("unknown joint `{other}`")),
                }
            }
        }
    };
}

joints!(
    SpineBase,
    SpineMid,
    SpineShoulder,
    Neck,
    Head,
    ShoulderL,
    ShoulderR,
    ElbowL,
    ElbowR,
    WristL,
    WristR,
    HandL,
    HandR,
    HandTipL,
    HandTipR,
    ThumbL,
    ThumbR,
    HipL,
    HipR,
    KneeL,
    KneeR,
    AnkleL,
    AnkleR,
    FootL,
    FootR,
);

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl JointId {
    /// The 13 upper-body joints tracked while seated.
    pub const UPPER_BODY: [JointId; 13] = [
        JointId::SpineBase,
        JointId::SpineMid,
        JointId::SpineShoulder,
        JointId::Neck,
        JointId::Head,
        JointId::ShoulderL,
        JointId::ShoulderR,
        JointId::ElbowL,
        JointId::ElbowR,
        JointId::WristL,
        JointId::WristR,
        JointId::HandL,
        JointId::HandR,
    ];

    pub fn is_leg(self) -> bool {
        matches!(
            self,
            JointId::HipL
                | JointId::HipR
                | JointId::KneeL
                | JointId::KneeR
                | JointId::AnkleL
                | JointId::AnkleR
                | JointId::FootL
                | JointId::FootR
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackingMode {
    Sitting,
    Standing,
}

impl TrackingMode {
    pub fn required_joints(self) -> &'static [JointId] {
        match self {
            TrackingMode::Sitting => &JointId::UPPER_BODY,
            TrackingMode::Standing => &JointId::ALL,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrackingMode::Sitting => "sitting",
            TrackingMode::Standing => "standing",
        }
    }
}

impl FromStr for TrackingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sitting" => Ok(TrackingMode::Sitting),
            "standing" => Ok(TrackingMode::Standing),
            other => Err(format!("unknown tracking mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameTag {
    Sensor,
    Shared,
}

/// One timestamped skeleton sample.
///
/// Construction validates the joint set against the tracking mode. Sitting
/// frames never carry leg joints; any supplied are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoseFrame", into = "RawPoseFrame")]
pub struct PoseFrame {
    timestamp_ms: u64,
    mode: TrackingMode,
    frame_tag: FrameTag,
    joints: BTreeMap<JointId, Vec3>,
}

#[derive(Serialize, Deserialize)]
struct RawPoseFrame {
    t_ms: u64,
    mode: TrackingMode,
    frame: FrameTag,
    joints: BTreeMap<JointId, Vec3>,
}

impl TryFrom<RawPoseFrame> for PoseFrame {
    type Error = SkeletonError;
    fn try_from(r: RawPoseFrame) -> Result<Self, Self::Error> {
        PoseFrame::new(r.t_ms, r.mode, r.frame, r.joints)
    }
}

impl From<PoseFrame> for RawPoseFrame {
    fn from(f: PoseFrame) -> Self {
        RawPoseFrame {
            t_ms: f.timestamp_ms,
            mode: f.mode,
            frame: f.frame_tag,
            joints: f.joints,
        }
    }
}

impl PoseFrame {
    pub fn new(
        timestamp_ms: u64,
        mode: TrackingMode,
        frame_tag: FrameTag,
        mut joints: BTreeMap<JointId, Vec3>,
    ) -> Result<Self, SkeletonError> {
        if mode == TrackingMode::Sitting {
            joints.retain(|j, _| !j.is_leg());
        }
        for &joint in mode.required_joints() {
            if !joints.contains_key(&joint) {
                return Err(SkeletonError::MissingJoint { joint, line: None });
            }
        }
        if let Some((&j, _)) = joints.iter().find(|(_, p)| !p.is_finite()) {
            return Err(SkeletonError::NonFinite(j));
        }
        Ok(Self {
            timestamp_ms,
            mode,
            frame_tag,
            joints,
        })
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    pub fn mode(&self) -> TrackingMode {
        self.mode
    }

    pub fn frame_tag(&self) -> FrameTag {
        self.frame_tag
    }

    pub fn joints(&self) -> &BTreeMap<JointId, Vec3> {
        &self.joints
    }

    pub fn joint(&self, j: JointId) -> Result<Vec3, SkeletonError> {
        self.joints
            .get(&j)
            .copied()
            .ok_or(SkeletonError::MissingJoint { joint: j, line: None })
    }

    /// Same frame with a different timestamp.
    pub fn with_timestamp(mut self, t_ms: u64) -> Self {
        self.timestamp_ms = t_ms;
        self
    }

    /// Upper-body restriction of this frame, valid in sitting mode.
    pub fn to_sitting(&self) -> Result<PoseFrame, SkeletonError> {
        PoseFrame::new(
            self.timestamp_ms,
            TrackingMode::Sitting,
            self.frame_tag,
            self.joints.clone(),
        )
    }

    /// Re-expresses a sensor-frame pose in the shared frame.
    pub fn project_to_shared(&self, calib: &RigidTransform) -> Result<PoseFrame, SkeletonError> {
        if self.frame_tag != FrameTag::Sensor {
            return Err(SkeletonError::FrameTag);
        }
        Ok(PoseFrame {
            timestamp_ms: self.timestamp_ms,
            mode: self.mode,
            frame_tag: FrameTag::Shared,
            joints: self
                .joints
                .iter()
                .map(|(&j, &p)| (j, calib.apply(p)))
                .collect(),
        })
    }

    /// Vector from joint `from` to joint `to`.
    pub fn bone(&self, from: JointId, to: JointId) -> Result<Vec3, SkeletonError> {
        Ok(self.joint(to)? - self.joint(from)?)
    }
}

pub fn project_to_shared(f: &PoseFrame, calib: &RigidTransform) -> Result<PoseFrame, SkeletonError> {
    f.project_to_shared(calib)
}

pub fn bone(f: &PoseFrame, from: JointId, to: JointId) -> Result<Vec3, SkeletonError> {
    f.bone(from, to)
}
