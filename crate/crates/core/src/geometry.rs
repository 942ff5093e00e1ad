//! Poses, angles and the small amount of solid geometry the simulator needs.
//!
//! Frame conventions: the workspace frame has x to the right, y forward and
//! z up, with the origin on the table surface under the robot base. A
//! [`Pose6D`] rotation is `Rz(yaw) * Ry(pitch) * Rx(roll)`; for the
//! end-effector the approach direction is the local `-z` axis, so a zero
//! pose holds the gripper vertically over the table.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Position plus yaw/pitch/roll, the unit of every pose in the system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6D {
    pub position: Vec3,
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
}

impl Default for Pose6D {
    fn default() -> Self {
        Self::from_xyz_yaw(0.0, 0.0, 0.0, 0.0)
    }
}

impl Pose6D {
    pub fn new(position: Vec3, yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            position,
            yaw: normalize_angle(yaw),
            pitch,
            roll,
        }
    }

    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(Vec3::new(x, y, z), yaw, 0.0, 0.0)
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.position),
            UnitQuaternion::from_rotation_matrix(&self.rotation()),
        )
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let (roll, pitch, yaw) = iso.rotation.euler_angles();
        Self {
            position: iso.translation.vector,
            yaw: normalize_angle(yaw),
            pitch,
            roll: normalize_angle(roll),
        }
    }

    /// `self ∘ other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose6D) -> Pose6D {
        Self::from_isometry(&(self.isometry() * other.isometry()))
    }

    pub fn inverse(&self) -> Pose6D {
        Self::from_isometry(&self.isometry().inverse())
    }

    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.rotation() * local + self.position
    }

    pub fn inverse_transform_point(&self, world: &Vec3) -> Vec3 {
        self.rotation().inverse() * (world - self.position)
    }

    /// Angular error `(yaw, pitch, roll)` from `self` to `target`, yaw and roll wrapped.
    pub fn angle_error_to(&self, target: &Pose6D) -> Vec3 {
        Vec3::new(
            normalize_angle(target.yaw - self.yaw),
            target.pitch - self.pitch,
            normalize_angle(target.roll - self.roll),
        )
    }

    pub fn translated(&self, delta: Vec3) -> Pose6D {
        Pose6D {
            position: self.position + delta,
            ..*self
        }
    }

    pub fn xy(&self) -> Vec2 {
        Vec2::new(self.position.x, self.position.y)
    }
}

/// Axis-aligned rectangle in the table plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect2 {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect2 {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self {
            min: Vec2::new(min.x.min(max.x), min.y.min(max.y)),
            max: Vec2::new(min.x.max(max.x), min.y.max(max.y)),
        }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }
}

/// An upright box rotated about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UprightBox {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub yaw: f64,
}

impl UprightBox {
    fn to_local(&self, p: &Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.center;
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    fn dir_to_local(&self, d: &Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// Whether the footprint of the box contains `p` (z ignored).
    pub fn footprint_contains(&self, p: &Vec2) -> bool {
        let local = self.to_local(&Vec3::new(p.x, p.y, self.center.z));
        local.x.abs() <= self.half_extents.x && local.y.abs() <= self.half_extents.y
    }

    /// Smallest ray parameter `t > min_t` at which `origin + t * dir` enters the box.
    pub fn ray_entry(&self, origin: &Vec3, dir: &Vec3, min_t: f64) -> Option<f64> {
        let o = self.to_local(origin);
        let d = self.dir_to_local(dir);
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for axis in 0..3 {
            let h = self.half_extents[axis];
            if d[axis].abs() < 1e-15 {
                if o[axis] < -h || o[axis] > h {
                    return None;
                }
                continue;
            }
            let t1 = (-h - o[axis]) / d[axis];
            let t2 = (h - o[axis]) / d[axis];
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            t_near = t_near.max(lo);
            t_far = t_far.min(hi);
            if t_near > t_far {
                return None;
            }
        }
        if t_near > min_t {
            Some(t_near)
        } else {
            None
        }
    }

    pub fn footprint_corners(&self) -> [Vec3; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hx = self.half_extents.x;
        let hy = self.half_extents.y;
        let top = self.center.z + self.half_extents.z;
        [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)].map(|(lx, ly)| {
            Vec3::new(
                self.center.x + c * lx - s * ly,
                self.center.y + s * lx + c * ly,
                top,
            )
        })
    }
}

pub fn point3(v: &Vec3) -> Point3<f64> {
    Point3::from(*v)
}
