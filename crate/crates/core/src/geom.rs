//! Rigid transforms in SE(3).
//!
//! A [`Pose`] maps points from its local frame into the parent frame:
//! `p_parent = R * p_local + t`. Composition follows matrix order, so
//! `a.compose(&b)` applies `b` first and then `a`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector6, SVD};

pub type Point3 = nalgebra::Point3<f64>;

/// Frobenius drift of `RᵀR − I` above which compose re-orthonormalizes.
const REORTHO_DRIFT: f64 = 1e-12;

/// Tolerance used by [`Pose::is_valid`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quaternion();
        write!(
            f,
            "Pose(t=[{:.6}, {:.6}, {:.6}], q=[{:.6}, {:.6}, {:.6}, {:.6}])",
            self.translation.x, self.translation.y, self.translation.z, q.i, q.j, q.k, q.w
        )
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// Rotation about +z by `yaw` radians followed by `translation`.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::new(rot_z(yaw), translation)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self::new(*q.to_rotation_matrix().matrix(), translation)
    }

    /// Right-perturbation increment: rotation `exp([phi]×)` and translation `rho`.
    ///
    /// `pose.compose(&Pose::increment(delta))` maps a local point `x` to
    /// `R (exp(phi) x + rho) + t`; this is the parameterization the NDT
    /// derivatives are taken with respect to.
    pub fn increment(delta: &Vector6<f64>) -> Self {
        let rho = Vector3::new(delta[0], delta[1], delta[2]);
        let phi = Vector3::new(delta[3], delta[4], delta[5]);
        Self::new(so3_exp(&phi), rho)
    }

    /// `self · increment(delta)`.
    pub fn retract(&self, delta: &Vector6<f64>) -> Self {
        self.compose(&Self::increment(delta))
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        let rotation = self.rotation * other.rotation;
        let translation = self.rotation * other.translation + self.translation;
        let mut out = Pose::new(rotation, translation);
        if out.orthonormality_error() > REORTHO_DRIFT {
            out.rotation = orthonormalize(&out.rotation);
        }
        out
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Pose {
        Pose::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Finite entries, orthonormal rotation with determinant +1.
    pub fn is_valid(&self) -> bool {
        self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && self.orthonormality_error() < ROTATION_TOLERANCE
            && (self.rotation.determinant() - 1.0).abs() < ROTATION_TOLERANCE
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Heading of the local x axis projected on the xy plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rodrigues' formula; series expansion near zero.
pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    let (a, b) = if theta2 < 1e-12 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

/// Nearest rotation matrix in the Frobenius sense (polar decomposition).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(*r, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * vt;
    if out.determinant() < 0.0 {
        let mut d = Matrix3::identity();
        d[(2, 2)] = -1.0;
        out = u * d * vt;
    }
    out
}
