//! Small pose and angle helpers shared by every module.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

pub type Vec3 = Vector3<f64>;

/// Position plus heading about the world z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            position: Vec3::new(x, y, z),
            yaw,
        }
    }

    pub fn x(&self) -> f64 {
        self.position.x
    }

    pub fn y(&self) -> f64 {
        self.position.y
    }

    pub fn z(&self) -> f64 {
        self.position.z
    }

    /// Express a world-frame point in this pose's body frame (x forward, y left).
    pub fn to_local(&self, world: &Vec3) -> Vec3 {
        let d = world - self.position;
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// Inverse of [`Pose::to_local`].
    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.position + rotate_z(local, self.yaw)
    }

    pub fn horizontal_distance(&self, other: &Vec3) -> f64 {
        horizontal_distance(&self.position, other)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds {
    /// Box from the origin to `(x, y, z)`.
    pub fn from_size(x: f64, y: f64, z: f64) -> Self {
        Self {
            min: Vec3::zeros(),
            max: Vec3::new(x, y, z),
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

pub fn rotate_z(v: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

pub fn horizontal_distance(a: &Vec3, b: &Vec3) -> f64 {
    Vector2::new(a.x - b.x, a.y - b.y).norm()
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_pi(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Wrap an angle to (-pi/2, pi/2]; used for axes that are ambiguous under a half turn.
pub fn wrap_half_pi(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(PI);
    if a > FRAC_PI_2 {
        a -= PI;
    }
    a
}

/// Distance from `p` to the segment `a..b` in the horizontal plane.
pub fn horizontal_distance_to_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = Vector2::new(b.x - a.x, b.y - a.y);
    let ap = Vector2::new(p.x - a.x, p.y - a.y);
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return ap.norm();
    }
    let t = (ap.dot(&ab) / len2).clamp(0.0, 1.0);
    (ap - ab * t).norm()
}
