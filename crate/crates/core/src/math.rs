//! Small vector/quaternion toolkit used throughout the simulator.
//!
//! Everything is `f64` and in millimetres unless stated otherwise.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
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

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let l = self.length();
        if l == 0.0 {
            Vec3::ZERO
        } else {
            self / l
        }
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).length()
    }

    /// Mirror reflection of an incident direction about a surface normal.
    /// `self` points into the surface, `n` points against it.
    pub fn reflect(self, n: Vec3) -> Vec3 {
        self - n * (2.0 * self.dot(n))
    }

    /// Any orthonormal pair completing `self` (assumed unit) to a basis.
    pub fn orthonormal_basis(self) -> (Vec3, Vec3) {
        // Duff et al. branchless ONB.
        let sign = if self.z >= 0.0 { 1.0 } else { -1.0 };
        let a = -1.0 / (sign + self.z);
        let b = self.x * self.y * a;
        let t1 = Vec3::new(1.0 + sign * self.x * self.x * a, sign * b, -sign * self.x);
        let t2 = Vec3::new(b, sign + self.y * self.y * a, -self.y);
        (t1, t2)
    }

    pub fn min_component(self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Vec3 {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion, scalar-first storage (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Self {
        let a = axis.normalized();
        let (s, c) = (angle_rad * 0.5).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // q v q* via the expanded two-cross form.
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    pub fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Axis-aligned box in world millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x < self.max.x
            && p.y >= self.min.y
            && p.y < self.max.y
            && p.z >= self.min.z
            && p.z < self.max.z
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = Vec3::new(margin, margin, margin);
        Aabb::new(self.min - m, self.max + m)
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(
            Vec3::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y), self.min.z.min(o.min.z)),
            Vec3::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y), self.max.z.max(o.max.z)),
        )
    }
}

pub fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Trilinear blend of the 8 corner values of a unit cell.
/// `c[i]` is ordered with x fastest: bit0 = x, bit1 = y, bit2 = z.
pub fn trilinear(c: &[f64; 8], fx: f64, fy: f64, fz: f64) -> f64 {
    let x00 = lerp(c[0], c[1], fx);
    let x10 = lerp(c[2], c[3], fx);
    let x01 = lerp(c[4], c[5], fx);
    let x11 = lerp(c[6], c[7], fx);
    let y0 = lerp(x00, x10, fy);
    let y1 = lerp(x01, x11, fy);
    lerp(y0, y1, fz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cross_follows_right_hand_rule() {
        let c = Vec3::X.cross(Vec3::Y);
        assert_relative_eq!(c.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reflect_mirrors_about_normal() {
        let d = Vec3::new(1.0, 0.0, -1.0).normalized();
        let r = d.reflect(Vec3::Z);
        assert_relative_eq!(r.x, 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r.z, 1.0 / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn onb_is_orthonormal() {
        for v in [
            Vec3::new(0.3, -0.8, 0.52).normalized(),
            Vec3::Z,
            -Vec3::Z,
            Vec3::new(0.0, 1e-9, -1.0).normalized(),
        ] {
            let (t1, t2) = v.orthonormal_basis();
            assert_relative_eq!(t1.length(), 1.0, epsilon = 1e-9);
            assert_relative_eq!(t2.length(), 1.0, epsilon = 1e-9);
            assert_relative_eq!(t1.dot(v), 0.0, epsilon = 1e-9);
            assert_relative_eq!(t2.dot(v), 0.0, epsilon = 1e-9);
            assert_relative_eq!(t1.dot(t2), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn quat_rotation_matches_axis_angle() {
        let q = Quat::from_axis_angle(Vec3::Y, std::f64::consts::FRAC_PI_2);
        let r = q.rotate(Vec3::Z);
        // +z rotated 90 deg about +y lands on +x
        assert_relative_eq!(r.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn trilinear_interpolates_corners_and_center() {
        let c = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]; // value = x
        assert_relative_eq!(trilinear(&c, 0.25, 0.7, 0.3), 0.25, epsilon = 1e-12);
        let c2 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        assert_relative_eq!(trilinear(&c2, 0.5, 0.5, 0.5), 4.5, epsilon = 1e-12);
    }
}
