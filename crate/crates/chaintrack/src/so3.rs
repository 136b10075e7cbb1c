//! Rotation algebra shared by all modules: unit quaternions, Modified
//! Rodrigues Parameters (MRPs), rotation matrices, the quaternion exp/log
//! maps and the small SO(3) Jacobians the estimator needs.
//!
//! Conventions:
//! * quaternions are scalar-first `(w, x, y, z)` and Hamilton-multiplied,
//! * `UnitQuaternion::exp` takes a *half-angle* vector, i.e. the rotation
//!   angle is `2 * ||v||`, matching the `exp(dt/2 * omega)` propagation form,
//! * MRPs are `chi = e * tan(theta / 4)`; the shadow set `-chi / ||chi||^2`
//!   keeps `||chi|| <= 1` (angle at most 180 degrees).

use nalgebra::{Matrix3, Vector3};

/// 3-vector of `f64`, units depend on context (m, m/s^2, rad/s, rad/s^2).
pub type Vec3 = Vector3<f64>;

/// Below this magnitude, trigonometric ratios switch to series expansions.
const SMALL_ANGLE: f64 = 1e-12;

/// Unit quaternion, scalar-first storage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    /// Builds a quaternion from raw components and renormalizes.
    pub fn new_normalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let mut q = Self { w, x, y, z };
        q.renormalize();
        q
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n < SMALL_ANGLE {
            return Self::identity();
        }
        Self::exp(axis * (0.5 * angle / n))
    }

    /// Quaternion exponential of a half-angle vector: the result rotates by
    /// `2 * ||v||` about `v`. Uses a series expansion near zero.
    pub fn exp(v: Vec3) -> Self {
        let half = v.norm();
        let k = if half < SMALL_ANGLE {
            // sin(x)/x to second order
            1.0 - half * half / 6.0
        } else {
            half.sin() / half
        };
        Self::new_normalized(half.cos(), v.x * k, v.y * k, v.z * k)
    }

    /// Inverse of [`UnitQuaternion::exp`] on the principal branch: returns the
    /// half-angle vector with `2 * ||log(q)|| <= pi`.
    pub fn log(&self) -> Vec3 {
        let q = self.canonicalized();
        let s = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        let v = Vec3::new(q.x, q.y, q.z);
        if s < SMALL_ANGLE {
            // atan2(s, w)/s ~ 1/w for s -> 0 (w ~ 1 after canonicalization)
            v / q.w
        } else {
            v * (s.atan2(q.w) / s)
        }
    }

    /// Rotation vector (angle * axis) of this quaternion, angle in [0, pi].
    pub fn rotation_vector(&self) -> Vec3 {
        2.0 * self.log()
    }

    /// Rotation angle in [0, pi].
    pub fn angle(&self) -> f64 {
        self.rotation_vector().norm()
    }

    pub fn conjugate(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    fn renormalize(&mut self) {
        let n2 = self.dot(self);
        // already unit to machine precision: dividing would only churn the
        // last bits (and break bit-exact file round trips)
        if (n2 - 1.0).abs() <= 4.0 * f64::EPSILON {
            return;
        }
        let n = n2.sqrt();
        self.w /= n;
        self.x /= n;
        self.y /= n;
        self.z /= n;
    }

    /// Resolves the double cover deterministically: flips sign so `w >= 0`.
    pub fn canonicalized(&self) -> Self {
        if self.w < 0.0 {
            Self { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            *self
        }
    }

    /// Rotates a vector: `R(q) * v`.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn from_mrp(chi: &Mrp) -> Self {
        let n2 = chi.0.norm_squared();
        let d = 1.0 + n2;
        Self::new_normalized(
            (1.0 - n2) / d,
            2.0 * chi.0.x / d,
            2.0 * chi.0.y / d,
            2.0 * chi.0.z / d,
        )
    }

    /// MRP of the canonicalized (`w >= 0`) quaternion, so `||chi|| <= 1`.
    pub fn to_mrp(&self) -> Mrp {
        let q = self.canonicalized();
        let d = 1.0 + q.w;
        Mrp(Vec3::new(q.x / d, q.y / d, q.z / d))
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        RotationMatrix(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Shepperd's method; numerically stable for all rotation angles.
    pub fn from_rotation_matrix(r: &RotationMatrix) -> Self {
        let m = &r.0;
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt();
            let k = 0.5 / s;
            Self::new_normalized(
                0.5 * s,
                (m[(2, 1)] - m[(1, 2)]) * k,
                (m[(0, 2)] - m[(2, 0)]) * k,
                (m[(1, 0)] - m[(0, 1)]) * k,
            )
        } else if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            let k = 0.5 / s;
            Self::new_normalized(
                (m[(2, 1)] - m[(1, 2)]) * k,
                0.5 * s,
                (m[(0, 1)] + m[(1, 0)]) * k,
                (m[(0, 2)] + m[(2, 0)]) * k,
            )
        } else if m[(1, 1)] >= m[(2, 2)] {
            let s = (1.0 - m[(0, 0)] + m[(1, 1)] - m[(2, 2)]).sqrt();
            let k = 0.5 / s;
            Self::new_normalized(
                (m[(0, 2)] - m[(2, 0)]) * k,
                (m[(0, 1)] + m[(1, 0)]) * k,
                0.5 * s,
                (m[(1, 2)] + m[(2, 1)]) * k,
            )
        } else {
            let s = (1.0 - m[(0, 0)] - m[(1, 1)] + m[(2, 2)]).sqrt();
            let k = 0.5 / s;
            Self::new_normalized(
                (m[(1, 0)] - m[(0, 1)]) * k,
                (m[(0, 2)] + m[(2, 0)]) * k,
                (m[(1, 2)] + m[(2, 1)]) * k,
                0.5 * s,
            )
        }
    }

    /// Error angle between two orientations, in [0, pi].
    pub fn angle_to(&self, other: &Self) -> f64 {
        (self.conjugate() * *other).angle()
    }
}

impl std::ops::Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Hamilton product `self (*) rhs`, renormalized.
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion::new_normalized(
            self.w * rhs.w - self.x * rhs.x - self.y * rhs.y - self.z * rhs.z,
            self.w * rhs.x + self.x * rhs.w + self.y * rhs.z - self.z * rhs.y,
            self.w * rhs.y - self.x * rhs.z + self.y * rhs.w + self.z * rhs.x,
            self.w * rhs.z + self.x * rhs.y - self.y * rhs.x + self.z * rhs.w,
        )
    }
}

/// Modified Rodrigues Parameters `chi = e * tan(theta/4)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mrp(pub Vec3);

impl Mrp {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vec3::new(x, y, z))
    }

    pub fn zero() -> Self {
        Self(Vec3::zeros())
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// The shadow-set MRP representing the same rotation. Undefined at the
    /// identity; callers switch only when `||chi|| > 1`.
    pub fn shadow(&self) -> Self {
        Self(-self.0 / self.0.norm_squared())
    }

    /// Switches to the shadow set whenever `||chi|| > 1`, keeping the
    /// three-parameter representation away from the 360 degree singularity.
    pub fn normalized_to_shadow(&self) -> Self {
        if self.norm() > 1.0 {
            self.shadow()
        } else {
            *self
        }
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        UnitQuaternion::from_mrp(self)
    }

    /// Jacobian of `mrp(q(self) (*) q(delta))` with respect to the local MRP
    /// perturbation `delta` at `delta = 0`:
    ///
    /// `B(chi) = (1 - ||chi||^2) I + 2 [chi x] + 2 chi chi^T`
    ///
    /// This is the standard MRP kinematics matrix (`chi_dot = 1/4 B(chi) w`).
    pub fn composition_jacobian(&self) -> Matrix3<f64> {
        let n2 = self.0.norm_squared();
        Matrix3::identity() * (1.0 - n2)
            + 2.0 * cross_matrix(&self.0)
            + 2.0 * self.0 * self.0.transpose()
    }
}

/// 3x3 rotation matrix wrapper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transposed(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle in [0, pi]. Uses `atan2(||skew part||, trace part)`
    /// with the cosine term clamped to [-1, 1]; unlike plain
    /// `acos((tr - 1)/2)` this stays accurate near 0 and pi.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let s = 0.5
            * Vec3::new(
                m[(2, 1)] - m[(1, 2)],
                m[(0, 2)] - m[(2, 0)],
                m[(1, 0)] - m[(0, 1)],
            )
            .norm();
        let c = (0.5 * (m.trace() - 1.0)).clamp(-1.0, 1.0);
        s.atan2(c)
    }

    /// Checks `R^T R = I` and `det R = 1` within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let e = (self.0.transpose() * self.0 - Matrix3::identity()).norm();
        e <= tol && (self.0.determinant() - 1.0).abs() <= tol
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Skew-symmetric cross-product matrix: `cross_matrix(a) * b == a x b`.
pub fn cross_matrix(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Right Jacobian of the SO(3) exponential at rotation vector `phi`:
/// `exp_rv(phi + d) ~ exp_rv(phi) * exp_rv(Jr(phi) d)`.
pub fn right_jacobian(phi: &Vec3) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let cx = cross_matrix(phi);
    if theta2 < SMALL_ANGLE {
        return Matrix3::identity() - 0.5 * cx + cx * cx / 6.0;
    }
    let theta = theta2.sqrt();
    let a = (1.0 - theta.cos()) / theta2;
    let b = (theta - theta.sin()) / (theta2 * theta);
    Matrix3::identity() - a * cx + b * (cx * cx)
}

/// Inverse of the left Jacobian of the SO(3) exponential at `phi`:
/// `log(exp_rv(d) * exp_rv(phi)) ~ phi + Jl_inv(phi) d`.
pub fn left_jacobian_inv(phi: &Vec3) -> Matrix3<f64> {
    let theta = phi.norm();
    let cx = cross_matrix(phi);
    let k = if theta < 1e-6 {
        1.0 / 12.0 + theta * theta / 720.0
    } else if theta > std::f64::consts::PI - 1e-6 {
        // (1 + cos)/(2 theta sin) -> 0 as theta -> pi
        1.0 / (theta * theta)
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() - 0.5 * cx + k * (cx * cx)
}

/// Minimum-angle rotation taking direction `from` onto direction `to`.
/// Falls back to a half-turn about an arbitrary perpendicular axis when the
/// directions are antiparallel.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> UnitQuaternion {
    let f = from.normalize();
    let t = to.normalize();
    let c = f.dot(&t);
    if c > 1.0 - 1e-12 {
        return UnitQuaternion::identity();
    }
    if c < -1.0 + 1e-12 {
        let axis = if f.x.abs() < 0.9 {
            f.cross(&Vec3::x()).normalize()
        } else {
            f.cross(&Vec3::y()).normalize()
        };
        return UnitQuaternion::from_axis_angle(&axis, std::f64::consts::PI);
    }
    let axis = f.cross(&t);
    UnitQuaternion::from_axis_angle(&axis, c.clamp(-1.0, 1.0).acos())
}
