//! Minimal 3D vector and axis-aligned box math used by the scanner.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn to_f32(self) -> [f32; 3] {
        [self.x as f32, self.y as f32, self.z as f32]
    }

    pub fn from_f32(p: [f32; 3]) -> Vec3 {
        Vec3::new(f64::from(p[0]), f64::from(p[1]), f64::from(p[2]))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
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

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Axis-aligned box. A rectangle is a box with zero extent on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max.axis(axis) - self.min.axis(axis)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p.axis(a) >= self.min.axis(a) && p.axis(a) <= self.max.axis(a))
    }

    pub fn contains_strictly(&self, p: Vec3) -> bool {
        (0..3).all(|a| p.axis(a) > self.min.axis(a) && p.axis(a) < self.max.axis(a))
    }

    /// Euclidean distance from `p` to the box boundary.
    pub fn surface_distance(&self, p: Vec3) -> f64 {
        if self.contains(p) {
            (0..3)
                .map(|a| (p.axis(a) - self.min.axis(a)).min(self.max.axis(a) - p.axis(a)))
                .fold(f64::INFINITY, f64::min)
        } else {
            let d = |a: usize| {
                (self.min.axis(a) - p.axis(a))
                    .max(0.0)
                    .max(p.axis(a) - self.max.axis(a))
            };
            Vec3::new(d(0), d(1), d(2)).norm()
        }
    }

    /// Nearest point of the box surface hit by the ray at a parameter
    /// `t >= 0`: the entry point from outside, the exit point from inside.
    ///
    /// Each of the six face planes is intersected analytically and the hit
    /// point is kept when it falls inside the face. `direction` must be unit
    /// length for the returned value to be a distance.
    pub fn ray_intersect(&self, origin: Vec3, direction: Vec3) -> Option<(f64, Vec3)> {
        let mut best: Option<f64> = None;
        for axis in 0..3 {
            let d = direction.axis(axis);
            if d == 0.0 {
                continue;
            }
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for plane in [self.min.axis(axis), self.max.axis(axis)] {
                let t = (plane - origin.axis(axis)) / d;
                if t.is_nan() || t < 0.0 || best.is_some_and(|b| t >= b) {
                    continue;
                }
                let pu = origin.axis(u) + t * direction.axis(u);
                let pv = origin.axis(v) + t * direction.axis(v);
                if pu >= self.min.axis(u)
                    && pu <= self.max.axis(u)
                    && pv >= self.min.axis(v)
                    && pv <= self.max.axis(v)
                {
                    best = Some(t);
                }
            }
        }
        best.map(|t| (t, origin + direction * t))
    }
}
