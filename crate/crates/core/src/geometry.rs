//! Rigid-body math used to calibrate sensor-frame points into the shared
//! collaboration frame.
//!
//! The shared frame is right-handed with +Y up and +Z pointing from the
//! seated person toward the front of the workstation.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norm below which a quaternion or direction vector is rejected.
pub const DEGENERATE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("quaternion norm {0:e} is too small to normalize")]
    DegenerateQuaternion(f64),
    #[error("vector norm {0:e} is too small to define a direction")]
    DegenerateVector(f64),
    #[error("non-finite coordinate")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Rotation quaternion, stored scalar-first and always unit length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes `(w, x, y, z)` to unit length.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n <= DEGENERATE_EPS {
            return Err(GeometryError::DegenerateQuaternion(n));
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Rotation of `angle_deg` degrees about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: Vec3, angle_deg: f64) -> Result<Self, GeometryError> {
        let n = axis.norm();
        if n <= DEGENERATE_EPS {
            return Err(GeometryError::DegenerateVector(n));
        }
        let half = angle_deg.to_radians() / 2.0;
        let a = axis * (half.sin() / n);
        Self::new(half.cos(), a.x, a.y, a.z)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn conjugate(self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product `self * other`, renormalized to absorb rounding drift.
    pub fn mul(self, o: UnitQuaternion) -> UnitQuaternion {
        let w = self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z;
        let x = self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y;
        let y = self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x;
        let z = self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w;
        // product of unit quaternions has norm 1 up to rounding
        UnitQuaternion::new(w, x, y, z).unwrap_or(UnitQuaternion::IDENTITY)
    }

    /// Rotates `p` by this quaternion (`q p q*`).
    pub fn rotate(self, p: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(p) * 2.0;
        p + t * self.w + u.cross(t)
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = GeometryError;
    fn try_from(a: [f64; 4]) -> Result<Self, Self::Error> {
        UnitQuaternion::new(a[0], a[1], a[2], a[3])
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

pub fn make_unit_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<UnitQuaternion, GeometryError> {
    UnitQuaternion::new(w, x, y, z)
}

pub fn rotate(q: UnitQuaternion, p: Vec3) -> Vec3 {
    q.rotate(p)
}

/// Rotation followed by translation. Maps sensor-frame points into the
/// shared frame when built from a marker observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: UnitQuaternion,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: UnitQuaternion::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: UnitQuaternion, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn translation(t: Vec3) -> Self {
        Self::new(UnitQuaternion::IDENTITY, t)
    }

    /// Transform whose origin sits at the marker `position` with axes
    /// oriented by `orientation`.
    pub fn from_marker(position: Vec3, orientation: UnitQuaternion) -> Self {
        Self::new(orientation, position)
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.mul(other.rotation),
            translation: self.rotation.rotate(other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.conjugate();
        RigidTransform {
            rotation: inv,
            translation: -inv.rotate(self.translation),
        }
    }
}

pub fn rigid_from_marker(position: Vec3, orientation: UnitQuaternion) -> RigidTransform {
    RigidTransform::from_marker(position, orientation)
}

pub fn transform_point(t: &RigidTransform, p: Vec3) -> Vec3 {
    t.apply(p)
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Angle between two directions in degrees, in `[0, 180]`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN norms must fail the guard
pub fn angle_between(u: Vec3, v: Vec3) -> Result<f64, GeometryError> {
    let nu = u.norm();
    if !(nu > DEGENERATE_EPS) {
        return Err(GeometryError::DegenerateVector(nu));
    }
    let nv = v.norm();
    if !(nv > DEGENERATE_EPS) {
        return Err(GeometryError::DegenerateVector(nv));
    }
    let c = u.dot(v) / (nu * nv);
    // Near +-1 the plain quotient carries a few ulps of error, which arccos
    // amplifies to ~1e-6 degrees; the chord form keeps it under half an ulp.
    let c = if c.abs() > 0.99 {
        let (a, b) = (u * (1.0 / nu), v * (1.0 / nv));
        if c > 0.0 {
            1.0 - (a - b).dot(a - b) * 0.5
        } else {
            (a + b).dot(a + b) * 0.5 - 1.0
        }
    } else {
        c
    };
    Ok(c.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Oriented plane given by a point and a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl Plane {
    /// Signed distance of `p` along the normal.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        (p - self.point).dot(self.normal)
    }
}

/// Marker observation: where the sensor sits in the shared frame.
///
/// On disk: `{"position":[x,y,z], "quaternion":[w,x,y,z]}` with the scalar
/// part first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationObservation {
    pub position: Vec3,
    pub quaternion: UnitQuaternion,
}

impl CalibrationObservation {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_marker(self.position, self.quaternion)
    }
}
