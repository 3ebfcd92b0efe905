//! The adjustable virtual workstation.
//!
//! Desk-local axes: origin on the ground below the middle of the front
//! edge, +Y up, +Z running from the front edge toward the back of the desk.
//! `pose_in_shared` places that frame in the shared frame.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Plane, RigidTransform, Vec3};

const DEFAULT_CONFIG: &str = include_str!("../config/workstation.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkstationError {
    #[error("{field} = {value} m is outside [{min}, {max}]")]
    DimensionOutOfBounds {
        field: DimensionField,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("invalid workstation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkstationType {
    SittingDesk,
    StandingDesk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionField {
    Height,
    Width,
    Length,
    LayerToGround,
}

impl DimensionField {
    pub const ALL: [DimensionField; 4] = [
        DimensionField::Height,
        DimensionField::Width,
        DimensionField::Length,
        DimensionField::LayerToGround,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DimensionField::Height => "height",
            DimensionField::Width => "width",
            DimensionField::Length => "length",
            DimensionField::LayerToGround => "layer_to_ground",
        }
    }
}

impl fmt::Display for DimensionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DimensionField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DimensionField::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown dimension `{s}`"))
    }
}

/// Inclusive `[min, max]` range in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for Bounds {
    fn from(a: [f64; 2]) -> Self {
        Bounds { min: a[0], max: a[1] }
    }
}

impl From<Bounds> for [f64; 2] {
    fn from(b: Bounds) -> Self {
        [b.min, b.max]
    }
}

impl Bounds {
    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionBounds {
    pub height_m: Bounds,
    pub width_m: Bounds,
    pub length_m: Bounds,
    pub layer_to_ground_m: Bounds,
}

impl DimensionBounds {
    pub fn get(&self, field: DimensionField) -> Bounds {
        match field {
            DimensionField::Height => self.height_m,
            DimensionField::Width => self.width_m,
            DimensionField::Length => self.length_m,
            DimensionField::LayerToGround => self.layer_to_ground_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeDefaults {
    pub height_m: f64,
    pub width_m: f64,
    pub length_m: f64,
    pub layer_to_ground_m: f64,
    pub color: [u8; 3],
    pub monitor_center: Vec3,
    pub keyboard_center: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeConfig {
    pub bounds: DimensionBounds,
    pub defaults: TypeDefaults,
}

/// Per-type bounds and default dimensions, loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkstationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub sitting: TypeConfig,
    pub standing: TypeConfig,
}

impl WorkstationConfig {
    pub fn from_json(s: &str) -> Result<Self, WorkstationError> {
        let cfg: WorkstationConfig =
            serde_json::from_str(s).map_err(|e| WorkstationError::Config(e.to_string()))?;
        for t in [WorkstationType::SittingDesk, WorkstationType::StandingDesk] {
            let tc = cfg.for_type(t);
            for f in DimensionField::ALL {
                let b = tc.bounds.get(f);
                if !(b.min.is_finite() && b.max.is_finite() && b.min <= b.max && b.min >= 0.0) {
                    return Err(WorkstationError::Config(format!("bad bounds for {f}")));
                }
            }
            cfg.build(t, RigidTransform::IDENTITY)?;
        }
        if cfg.sitting.defaults.height_m >= cfg.standing.defaults.height_m {
            return Err(WorkstationError::Config(
                "standing default height must exceed the sitting default".into(),
            ));
        }
        Ok(cfg)
    }

    /// The shipped configuration.
    pub fn shipped() -> &'static WorkstationConfig {
        static CFG: OnceLock<WorkstationConfig> = OnceLock::new();
        CFG.get_or_init(|| {
            WorkstationConfig::from_json(DEFAULT_CONFIG).expect("shipped workstation config is valid")
        })
    }

    pub fn for_type(&self, t: WorkstationType) -> &TypeConfig {
        match t {
            WorkstationType::SittingDesk => &self.sitting,
            WorkstationType::StandingDesk => &self.standing,
        }
    }

    pub fn build(&self, t: WorkstationType, pose: RigidTransform) -> Result<WorkstationSpec, WorkstationError> {
        let tc = self.for_type(t);
        let d = tc.defaults;
        let spec = WorkstationSpec {
            kind: t,
            height_m: d.height_m,
            width_m: d.width_m,
            length_m: d.length_m,
            layer_to_ground_m: d.layer_to_ground_m,
            color: d.color,
            pose_in_shared: pose,
            monitor_center: d.monitor_center,
            keyboard_center: d.keyboard_center,
            bounds: tc.bounds,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkstationSpec {
    #[serde(rename = "type")]
    kind: WorkstationType,
    height_m: f64,
    width_m: f64,
    length_m: f64,
    layer_to_ground_m: f64,
    color: [u8; 3],
    pose_in_shared: RigidTransform,
    monitor_center: Vec3,
    keyboard_center: Vec3,
    bounds: DimensionBounds,
}

/// A validated workstation. All mutation returns a new value.
///
/// `monitor_center` is an offset from the desk surface front-center and
/// `keyboard_center` an offset from the work layer front-center, both in
/// desk-local axes, so they follow height adjustments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWorkstationSpec", into = "RawWorkstationSpec")]
pub struct WorkstationSpec {
    pub kind: WorkstationType,
    pub height_m: f64,
    pub width_m: f64,
    pub length_m: f64,
    pub layer_to_ground_m: f64,
    pub color: [u8; 3],
    pub pose_in_shared: RigidTransform,
    pub monitor_center: Vec3,
    pub keyboard_center: Vec3,
    pub bounds: DimensionBounds,
}

impl TryFrom<RawWorkstationSpec> for WorkstationSpec {
    type Error = WorkstationError;
    fn try_from(r: RawWorkstationSpec) -> Result<Self, Self::Error> {
        let s = WorkstationSpec {
            kind: r.kind,
            height_m: r.height_m,
            width_m: r.width_m,
            length_m: r.length_m,
            layer_to_ground_m: r.layer_to_ground_m,
            color: r.color,
            pose_in_shared: r.pose_in_shared,
            monitor_center: r.monitor_center,
            keyboard_center: r.keyboard_center,
            bounds: r.bounds,
        };
        s.validate()?;
        Ok(s)
    }
}

impl From<WorkstationSpec> for RawWorkstationSpec {
    fn from(s: WorkstationSpec) -> Self {
        RawWorkstationSpec {
            kind: s.kind,
            height_m: s.height_m,
            width_m: s.width_m,
            length_m: s.length_m,
            layer_to_ground_m: s.layer_to_ground_m,
            color: s.color,
            pose_in_shared: s.pose_in_shared,
            monitor_center: s.monitor_center,
            keyboard_center: s.keyboard_center,
            bounds: s.bounds,
        }
    }
}

/// Default workstation of the given type from the shipped config.
pub fn default_workstation(t: WorkstationType) -> WorkstationSpec {
    WorkstationConfig::shipped()
        .build(t, RigidTransform::IDENTITY)
        .expect("shipped defaults are valid")
}

impl WorkstationSpec {
    pub fn dimension(&self, field: DimensionField) -> f64 {
        match field {
            DimensionField::Height => self.height_m,
            DimensionField::Width => self.width_m,
            DimensionField::Length => self.length_m,
            DimensionField::LayerToGround => self.layer_to_ground_m,
        }
    }

    pub fn validate(&self) -> Result<(), WorkstationError> {
        for field in DimensionField::ALL {
            let value = self.dimension(field);
            let b = self.bounds.get(field);
            if !value.is_finite() || !b.contains(value) {
                return Err(WorkstationError::DimensionOutOfBounds {
                    field,
                    value,
                    min: b.min,
                    max: b.max,
                });
            }
        }
        if self.layer_to_ground_m > self.height_m {
            return Err(WorkstationError::InvariantViolation(format!(
                "layer_to_ground {} m exceeds height {} m",
                self.layer_to_ground_m, self.height_m
            )));
        }
        if !(self.monitor_center.is_finite() && self.monitor_center.y > 0.0) {
            return Err(WorkstationError::InvariantViolation(
                "monitor center must lie above the desk surface".into(),
            ));
        }
        if !(self.keyboard_center.is_finite() && self.keyboard_center.y >= 0.0) {
            return Err(WorkstationError::InvariantViolation(
                "keyboard center must not lie below the work layer".into(),
            ));
        }
        if !self.pose_in_shared.translation.is_finite() {
            return Err(WorkstationError::InvariantViolation("non-finite desk pose".into()));
        }
        Ok(())
    }

    /// Returns a copy with `field` set to `value`, re-validated.
    pub fn adjust_dimension(&self, field: DimensionField, value: f64) -> Result<WorkstationSpec, WorkstationError> {
        let b = self.bounds.get(field);
        if !value.is_finite() || !b.contains(value) {
            return Err(WorkstationError::DimensionOutOfBounds {
                field,
                value,
                min: b.min,
                max: b.max,
            });
        }
        let mut next = *self;
        match field {
            DimensionField::Height => next.height_m = value,
            DimensionField::Width => next.width_m = value,
            DimensionField::Length => next.length_m = value,
            DimensionField::LayerToGround => next.layer_to_ground_m = value,
        }
        next.validate()?;
        Ok(next)
    }

    pub fn with_color(&self, color: [u8; 3]) -> WorkstationSpec {
        WorkstationSpec { color, ..*self }
    }

    /// Horizontal top surface, normal pointing up.
    pub fn desk_surface_plane(&self) -> Plane {
        Plane {
            point: self.pose_in_shared.apply(Vec3::new(0.0, self.height_m, 0.0)),
            normal: self.pose_in_shared.apply_vector(Vec3::Y),
        }
    }

    /// Vertical plane through the front edge, normal pointing toward the
    /// user side.
    pub fn front_edge_plane(&self) -> Plane {
        Plane {
            point: self.pose_in_shared.apply(Vec3::ZERO),
            normal: self.pose_in_shared.apply_vector(-Vec3::Z),
        }
    }

    pub fn monitor_center_shared(&self) -> Vec3 {
        self.pose_in_shared
            .apply(self.monitor_center + Vec3::new(0.0, self.height_m, 0.0))
    }

    pub fn keyboard_center_shared(&self) -> Vec3 {
        self.pose_in_shared
            .apply(self.keyboard_center + Vec3::new(0.0, self.layer_to_ground_m, 0.0))
    }
}

pub fn adjust_dimension(
    w: &WorkstationSpec,
    field: DimensionField,
    value: f64,
) -> Result<WorkstationSpec, WorkstationError> {
    w.adjust_dimension(field, value)
}

pub fn desk_surface_plane(w: &WorkstationSpec) -> Plane {
    w.desk_surface_plane()
}
