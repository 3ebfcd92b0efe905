//! Core model for collaborative, ergonomics-aware workstation design
//! sessions: rigid calibration of tracked skeletons into a shared frame,
//! posture evaluation against guidelines, the adjustable workstation and
//! the deterministic session state machine that coordinates user,
//! designer and ergonomist.

pub mod ergonomics;
pub mod geometry;
pub mod pose_io;
pub mod rula;
pub mod session;
pub mod skeleton;
pub mod workstation;

pub use ergonomics::{evaluate, AngleSet, ErgonomicReport, GuidelineSpec, Measure, Side, Verdict};
pub use geometry::{angle_between, CalibrationObservation, RigidTransform, UnitQuaternion, Vec3};
pub use pose_io::{parse_pose_stream, PoseFormat, PoseStream};
pub use session::{
    apply_event, authority, new_session, replay, snapshot, EventKind, EventType, Notification, Phase, Role,
    SessionConfig, SessionError, SessionEvent, SessionState,
};
pub use skeleton::{FrameTag, JointId, PoseFrame, SkeletonError, TrackingMode};
pub use workstation::{default_workstation, DimensionField, WorkstationSpec, WorkstationType};
