//! Minimal quaternion and 3-vector helpers shared by forward kinematics
//! and virtual-sensor synthesis.
//!
//! Quaternions are stored (w, x, y, z) with w the scalar part. Unit
//! quaternions rotate vectors from the local frame into the parent/global
//! frame; use [`Quat::conjugate`] for the inverse rotation.

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn normalize3(a: Vec3) -> Vec3 {
    let n = norm3(a);
    if n == 0.0 {
        a
    } else {
        scale3(a, 1.0 / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn identity() -> Self {
        Quat::new(1.0, 0.0, 0.0, 0.0)
    }

    /// Rotation by `angle` radians about the (not necessarily unit) `axis`.
    pub fn from_axis_angle_parts(axis: Vec3, angle: f64) -> Self {
        let axis = normalize3(axis);
        let (s, c) = (angle / 2.0).sin_cos();
        Quat::new(c, axis[0] * s, axis[1] * s, axis[2] * s)
    }

    /// Rotation from an axis-angle vector whose norm is the angle in radians.
    ///
    /// Stable near zero: sin(θ/2)/θ is evaluated with a series fallback, so
    /// tiny axis-angle vectors map to near-identity rotations without a
    /// division blow-up.
    pub fn from_axis_angle(v: Vec3) -> Self {
        let theta = norm3(v);
        let half = theta / 2.0;
        let k = if theta < 1e-8 {
            // sin(θ/2)/θ = 1/2 − θ²/48 + O(θ⁴)
            0.5 - theta * theta / 48.0
        } else {
            half.sin() / theta
        };
        Quat::new(half.cos(), v[0] * k, v[1] * k, v[2] * k)
    }

    /// Hamilton product self ⊗ other.
    pub fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn conjugate(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalize(self) -> Quat {
        let n = self.norm();
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn negate(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }

    /// Component-wise difference, used for finite-difference derivatives.
    pub fn sub(self, o: Quat) -> Quat {
        Quat::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }

    /// Component-wise scaling (the result is generally not unit).
    pub fn scale(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn vec(self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    /// Rotate a vector by this (unit) quaternion: q v q*.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let qv = [self.x, self.y, self.z];
        let t = scale3(cross3(qv, v), 2.0);
        add3(add3(v, scale3(t, self.w)), cross3(qv, t))
    }

    /// Quaternion for the rotation matrix with columns `x`, `y`, `z`
    /// (an orthonormal right-handed triad). Shepperd's branch selection
    /// keeps the conversion well conditioned.
    pub fn from_basis(x: Vec3, y: Vec3, z: Vec3) -> Quat {
        // Matrix entries m[row][col] with columns x, y, z.
        let m = [
            [x[0], y[0], z[0]],
            [x[1], y[1], z[1]],
            [x[2], y[2], z[2]],
        ];
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        q.normalize()
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close3(a: Vec3, b: Vec3, tol: f64) {
        for i in 0..3 {
            assert!(
                (a[i] - b[i]).abs() < tol,
                "component {i}: {} vs {}",
                a[i],
                b[i]
            );
        }
    }

    #[test]
    fn rotate_quarter_turn_about_z() {
        let q = Quat::from_axis_angle([0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        assert_close3(q.rotate([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], 1e-12);
    }

    #[test]
    fn conjugate_inverts_rotation() {
        let q = Quat::from_axis_angle([0.3, -0.7, 1.1]);
        let v = [0.2, -1.5, 0.9];
        assert_close3(q.conjugate().rotate(q.rotate(v)), v, 1e-12);
    }

    #[test]
    fn axis_angle_near_zero_is_identity() {
        let q = Quat::from_axis_angle([1e-12, 0.0, 0.0]);
        assert!((q.norm() - 1.0).abs() < 1e-12);
        assert_close3(q.rotate([0.0, 1.0, 0.0]), [0.0, 1.0, 0.0], 1e-10);
    }

    #[test]
    fn product_matches_composed_rotation() {
        let a = Quat::from_axis_angle([0.0, 0.4, 0.0]);
        let b = Quat::from_axis_angle([0.9, 0.0, 0.0]);
        let v = [1.0, 2.0, 3.0];
        assert_close3(a.mul(b).rotate(v), a.rotate(b.rotate(v)), 1e-12);
    }

    #[test]
    fn from_basis_round_trips_axis_angle() {
        let q = Quat::from_axis_angle([0.2, 0.5, -0.8]);
        let x = q.rotate([1.0, 0.0, 0.0]);
        let y = q.rotate([0.0, 1.0, 0.0]);
        let z = q.rotate([0.0, 0.0, 1.0]);
        let r = Quat::from_basis(x, y, z);
        // q and -q encode the same rotation
        let d = q.dot(r).abs();
        assert!((d - 1.0).abs() < 1e-12, "dot = {d}");
    }
}
