//! Synthetic pose recordings: keyframed postures, interpolated, placed in
//! the shared frame, optionally re-expressed in sensor coordinates, with
//! seeded Gaussian jitter.

use std::path::Path;

use coaug_core::geometry::{CalibrationObservation, RigidTransform, UnitQuaternion, Vec3};
use coaug_core::pose_io::PoseStream;
use coaug_core::skeleton::{FrameTag, PoseFrame, TrackingMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{synth_pose, BodyDims, Posture, SynthParams, SynthesisError};

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("params: {0}")]
    Params(#[from] serde_yaml::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error("calibration {path}: {message}")]
    Calibration { path: String, message: String },
}

/// One angle for both sides, or `[left, right]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSide {
    Both(f64),
    Split([f64; 2]),
}

impl PerSide {
    fn sides(self) -> (f64, f64) {
        match self {
            PerSide::Both(v) => (v, v),
            PerSide::Split([l, r]) => (l, r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub frame: usize,
    pub trunk_deg: f64,
    pub neck_deg: f64,
    pub upper_arm_deg: PerSide,
    pub elbow_deg: PerSide,
}

impl Keyframe {
    fn posture(&self) -> Posture {
        let (ul, ur) = self.upper_arm_deg.sides();
        let (el, er) = self.elbow_deg.sides();
        Posture {
            trunk_deg: self.trunk_deg,
            neck_deg: self.neck_deg,
            upper_arm_l_deg: ul,
            upper_arm_r_deg: ur,
            elbow_l_deg: el,
            elbow_r_deg: er,
        }
    }
}

/// Where SpineBase sits in the shared frame and which way the body faces
/// (degrees about +y; 0 faces +z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub position: Vec3,
    #[serde(default)]
    pub yaw_deg: f64,
}

impl Placement {
    pub fn transform(&self) -> RigidTransform {
        let q = UnitQuaternion::from_axis_angle(Vec3::Y, self.yaw_deg).expect("y axis is not degenerate");
        RigidTransform::new(q, self.position)
    }
}

fn default_mode() -> TrackingMode {
    TrackingMode::Sitting
}

fn default_rate() -> f64 {
    30.0
}

fn default_decimals() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingParams {
    #[serde(default = "default_mode")]
    pub mode: TrackingMode,
    pub frames: usize,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of per-coordinate jitter, meters.
    #[serde(default)]
    pub noise_sd_m: f64,
    /// Coordinates are rounded to this many decimal places.
    #[serde(default = "default_decimals")]
    pub decimals: u32,
    #[serde(default)]
    pub body: BodyDims,
    pub placement: Placement,
    /// Sensor pose in the shared frame; when set, joints are written in
    /// sensor coordinates. Relative to the params file.
    #[serde(default)]
    pub sensor_calibration: Option<String>,
    /// Extra header lines (without the leading `#`).
    #[serde(default)]
    pub comments: Vec<String>,
    pub keyframes: Vec<Keyframe>,
}

impl RecordingParams {
    pub fn from_yaml(s: &str) -> Result<Self, RecordingError> {
        let p: RecordingParams = serde_yaml::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), RecordingError> {
        let bad = |m: &str| Err(RecordingError::Invalid(m.to_owned()));
        if self.frames == 0 {
            return bad("frames must be > 0");
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return bad("rate_hz must be > 0");
        }
        if !(self.noise_sd_m.is_finite() && self.noise_sd_m >= 0.0) {
            return bad("noise_sd_m must be >= 0");
        }
        if self.decimals > 12 {
            return bad("decimals must be <= 12");
        }
        if self.keyframes.is_empty() {
            return bad("at least one keyframe is required");
        }
        if self.keyframes.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return bad("keyframes must be in strictly increasing frame order");
        }
        Ok(())
    }

    /// Posture at frame `i`: linear between keyframes, held outside them.
    pub fn posture_at(&self, i: usize) -> Posture {
        let k = &self.keyframes;
        if i <= k[0].frame {
            return k[0].posture();
        }
        for w in k.windows(2) {
            if i <= w[1].frame {
                let s = (i - w[0].frame) as f64 / (w[1].frame - w[0].frame) as f64;
                return w[0].posture().lerp(&w[1].posture(), s);
            }
        }
        k[k.len() - 1].posture()
    }

    pub fn timestamp_ms(&self, i: usize) -> u64 {
        (i as f64 * 1000.0 / self.rate_hz).round() as u64
    }
}

pub fn load_calibration(path: &Path) -> Result<RigidTransform, RecordingError> {
    let err = |message: String| RecordingError::Calibration {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let obs = CalibrationObservation::from_json(&text).map_err(|e| err(e.to_string()))?;
    Ok(obs.transform())
}

/// Generates the recording. `calibration` is the sensor-to-shared
/// transform named by `sensor_calibration`, already loaded.
pub fn generate(p: &RecordingParams, calibration: Option<&RigidTransform>) -> Result<PoseStream, RecordingError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let noise = Normal::new(0.0, p.noise_sd_m).map_err(|e| RecordingError::Invalid(e.to_string()))?;
    let to_sensor = calibration.map(RigidTransform::inverse);
    let placement = p.placement.transform();
    let scale = 10f64.powi(p.decimals as i32);
    // nearest double to the rounded decimal, so files print it exactly; +0.0 avoids "-0"
    let quantize = |v: f64| (v * scale).round() / scale + 0.0;

    let mut frames = Vec::with_capacity(p.frames);
    for i in 0..p.frames {
        let shared = synth_pose(&SynthParams {
            body: p.body,
            posture: p.posture_at(i),
            mode: p.mode,
            t_ms: p.timestamp_ms(i),
            placement,
        })?;
        let joints = shared
            .joints()
            .iter()
            .map(|(&id, &v)| {
                let v = match &to_sensor {
                    Some(t) => t.apply(v),
                    None => v,
                };
                let jitter = |c: f64, rng: &mut ChaCha8Rng| {
                    if p.noise_sd_m > 0.0 {
                        c + noise.sample(rng)
                    } else {
                        c
                    }
                };
                let x = jitter(v.x, &mut rng);
                let y = jitter(v.y, &mut rng);
                let z = jitter(v.z, &mut rng);
                (id, Vec3::new(quantize(x), quantize(y), quantize(z)))
            })
            .collect();
        frames.push(PoseFrame::new(p.timestamp_ms(i), p.mode, FrameTag::Sensor, joints).expect("synthesized joints"));
    }

    let mut comments = vec![format!(
        "# SYNTHETIC pose recording: {} frames at {} Hz, noise sd {} m, seed {}",
        p.frames, p.rate_hz, p.noise_sd_m, p.seed
    )];
    comments.push(match &p.sensor_calibration {
        Some(c) => format!("# coordinates: sensor frame, sensor pose in {c}"),
        None => "# coordinates: shared frame".to_owned(),
    });
    comments.extend(p.comments.iter().map(|c| format!("# {c}")));
    Ok(PoseStream { comments, frames })
}
