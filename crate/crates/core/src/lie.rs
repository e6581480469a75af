//! SO(3) / SE(3) primitives.
//!
//! Poses are `(R, p)` pairs with homogeneous-matrix semantics; twists are
//! body-frame `(omega, v)` pairs. Exponential and logarithm maps use the
//! Rodrigues and left-Jacobian closed forms, switching to Taylor series
//! below [`SMALL_ANGLE`].

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Below this rotation angle exp/log use their series expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Rotation logs are refused when `trace(R) <= -1 + PI_MARGIN`.
pub const PI_MARGIN: f64 = 1e-9;

/// Orthonormality drift that triggers re-projection onto SO(3).
pub const DRIFT_TOLERANCE: f64 = 1e-9;

// Coefficients with a removable singularity at zero switch to series below
// this angle; the closed forms lose digits to cancellation there.
const SERIES_ANGLE: f64 = 1e-3;

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Checks orthonormality and orientation to `1e-9`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let r = Rotation(m);
        if r.orthonormality_error() <= 1e-9 && (m.determinant() - 1.0).abs() <= 1e-9 {
            Ok(r)
        } else {
            Err(Error::NotRotation)
        }
    }

    /// Wraps a matrix the caller has constructed orthonormal.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Nearest rotation in the Frobenius sense (polar decomposition).
    pub fn nearest(m: Matrix3<f64>) -> Result<Self> {
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::NotRotation),
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Ok(Rotation(r))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// `|R^T R - I|` in the Frobenius norm.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Re-projects onto SO(3) once drift exceeds [`DRIFT_TOLERANCE`].
    pub fn renormalized(self) -> Self {
        if self.orthonormality_error() > DRIFT_TOLERANCE {
            Rotation::nearest(self.0).unwrap_or(self)
        } else {
            self
        }
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rigid-body configuration `g = (R, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub position: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, position: Vec3) -> Self {
        Pose { rotation, position }
    }

    pub fn identity() -> Self {
        Pose::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(position: Vec3) -> Self {
        Pose::new(Rotation::identity(), position)
    }

    /// Homogeneous product `self * other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: (self.rotation * other.rotation).renormalized(),
            position: self.rotation * other.position + self.position,
        }
    }

    /// `(R^T, -R^T p)`.
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            position: -(rt * self.position),
        }
    }

    /// `self^-1 * other`, the configuration of `other` seen from `self`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }
}

/// Body-frame velocity `xi = (omega, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub angular: Vec3,
    pub linear: Vec3,
}

impl Twist {
    pub fn new(angular: Vec3, linear: Vec3) -> Self {
        Twist { angular, linear }
    }

    pub fn zero() -> Self {
        Twist::default()
    }

    /// Twist with only a forward speed along body x.
    pub fn forward(speed: f64) -> Self {
        Twist::new(Vec3::zeros(), Vec3::new(speed, 0.0, 0.0))
    }

    /// Stacked `(omega, v)`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]))
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.angular.iter().chain(self.linear.iter()).all(|x| x.is_finite())
    }

    /// The 4x4 matrix `xi^`.
    pub fn hat(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat3(&self.angular));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.linear);
        m
    }
}

impl Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.angular + rhs.angular, self.linear + rhs.linear)
    }
}

impl Sub for Twist {
    type Output = Twist;
    fn sub(self, rhs: Twist) -> Twist {
        Twist::new(self.angular - rhs.angular, self.linear - rhs.linear)
    }
}

impl Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.angular, -self.linear)
    }
}

impl Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, s: f64) -> Twist {
        Twist::new(self.angular * s, self.linear * s)
    }
}

/// `w^`, so that `hat3(w) * b = w x b`.
pub fn hat3(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`hat3`]; rejects matrices with `|S + S^T| > 1e-9`.
pub fn vee3(s: &Matrix3<f64>) -> Result<Vec3> {
    let asym = (s + s.transpose()).norm();
    if asym > 1e-9 {
        return Err(Error::NotSkew(asym));
    }
    Ok(Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

// sin(t)/t, (1 - cos t)/t^2, (t - sin t)/t^3
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let half = (0.5 * theta).sin();
        (
            theta.sin() / theta,
            2.0 * half * half / (theta * theta),
            (theta - theta.sin()) / (theta * theta * theta),
        )
    }
}

/// Rodrigues' formula.
pub fn exp_so3(w: &Vec3) -> Rotation {
    let theta = w.norm();
    let k = hat3(w);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Rotation(Matrix3::identity() + k + 0.5 * k2);
    }
    let (a, b, _) = rodrigues_coefficients(theta);
    Rotation(Matrix3::identity() + a * k + b * k2)
}

/// Principal logarithm; the result has norm at most pi.
pub fn log_so3(r: &Rotation) -> Result<Vec3> {
    let tr = r.trace();
    if tr <= -1.0 + PI_MARGIN {
        return Err(Error::NearPiSingularity(tr));
    }
    let m = r.matrix();
    // sin(theta) * axis
    let s = 0.5 * Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin_theta = s.norm();
    let cos_theta = 0.5 * (tr - 1.0);
    let theta = sin_theta.atan2(cos_theta);
    if theta < SMALL_ANGLE {
        return Ok(s * (1.0 + theta * theta / 6.0));
    }
    Ok(s * (theta / sin_theta))
}

/// Left Jacobian of SO(3).
fn left_jacobian(w: &Vec3) -> Matrix3<f64> {
    let theta = w.norm();
    let k = hat3(w);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + 0.5 * k + k2 / 6.0;
    }
    let (_, b, c) = rodrigues_coefficients(theta);
    Matrix3::identity() + b * k + c * k2
}

fn left_jacobian_inverse(w: &Vec3) -> Matrix3<f64> {
    let theta = w.norm();
    let k = hat3(w);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Matrix3::identity() - 0.5 * k + k2 / 12.0;
    }
    // (1 - (t/2) cot(t/2)) / t^2
    let d = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / (theta * theta)
    };
    Matrix3::identity() - 0.5 * k + d * k2
}

/// Group exponential of a twist.
pub fn exp_se3(xi: &Twist) -> Pose {
    Pose {
        rotation: exp_so3(&xi.angular),
        position: left_jacobian(&xi.angular) * xi.linear,
    }
}

/// Principal logarithm of a pose.
pub fn log_se3(g: &Pose) -> Result<Twist> {
    let w = log_so3(&g.rotation)?;
    Ok(Twist::new(w, left_jacobian_inverse(&w) * g.position))
}

/// `Ad_g xi = (g xi^ g^-1)^v`.
pub fn adjoint(g: &Pose, xi: &Twist) -> Twist {
    let rw = g.rotation * xi.angular;
    Twist::new(rw, g.position.cross(&rw) + g.rotation * xi.linear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn pose() -> impl Strategy<Value = Pose> {
        (vec3(), vec3()).prop_map(|(w, p)| {
            let w = if w.norm() > 3.0 { w * (3.0 / w.norm()) } else { w };
            Pose::new(exp_so3(&w), p)
        })
    }

    #[test]
    fn hat3_examples() {
        assert_eq!(hat3(&Vec3::zeros()), Matrix3::zeros());
        assert_eq!(hat3(&Vec3::x()) * Vec3::y(), Vec3::z());
        let w = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(vee3(&hat3(&w)).unwrap(), w);
    }

    #[test]
    fn vee3_examples() {
        assert_eq!(vee3(&Matrix3::zeros()).unwrap(), Vec3::zeros());
        let w = Vec3::new(0.1, -0.2, 0.3);
        assert_eq!(vee3(&hat3(&w)).unwrap(), w);
        let sym = Matrix3::new(1.0, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(vee3(&sym), Err(Error::NotSkew(_))));
    }

    #[test]
    fn exp_so3_examples() {
        assert_eq!(*exp_so3(&Vec3::zeros()).matrix(), Matrix3::identity());
        let r = exp_so3(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        assert!((r * Vec3::x() - Vec3::y()).norm() < 1e-15);
        let r = exp_so3(&Vec3::new(PI, 0.0, 0.0));
        let expected = Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
        assert!((r.matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn log_so3_examples() {
        assert_eq!(log_so3(&Rotation::identity()).unwrap(), Vec3::zeros());
        let w = Vec3::new(0.3, -0.1, 0.7);
        assert!((log_so3(&exp_so3(&w)).unwrap() - w).norm() < 1e-9);
        let flip = Rotation::from_matrix_unchecked(Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)));
        assert!(matches!(log_so3(&flip), Err(Error::NearPiSingularity(_))));
    }

    #[test]
    fn exp_se3_examples() {
        let g = exp_se3(&Twist::new(Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(g, Pose::from_translation(Vec3::new(1.0, 2.0, 3.0)));

        let w = Vec3::new(0.0, 0.0, FRAC_PI_2);
        let g = exp_se3(&Twist::new(w, Vec3::x()));
        let expected = Vec3::new(1.0, 1.0, 0.0) * (2.0 / PI);
        assert!((g.position - expected).norm() < 1e-15);
        assert_eq!(g.rotation, exp_so3(&w));
    }

    #[test]
    fn log_se3_examples() {
        assert_eq!(log_se3(&Pose::identity()).unwrap(), Twist::zero());
        let p = Vec3::new(-1.0, 4.0, 0.5);
        assert_eq!(
            log_se3(&Pose::from_translation(p)).unwrap(),
            Twist::new(Vec3::zeros(), p)
        );
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let v = Vec3::new(0.3, -1.0, 2.0);
        for &theta in &[1e-12, 5e-9, 2e-8, 1e-6, 5e-4, 2e-3] {
            let xi = Twist::new(Vec3::new(1.0, 2.0, -2.0).normalize() * theta, v);
            let back = log_se3(&exp_se3(&xi)).unwrap();
            assert!((back - xi).norm() < 1e-14, "theta = {theta}");
        }
    }

    #[test]
    fn adjoint_examples() {
        let xi = Twist::new(Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.0, -1.0, 2.0));
        assert_eq!(adjoint(&Pose::identity(), &xi), xi);
        let p = Vec3::new(2.0, -1.0, 0.5);
        let out = adjoint(&Pose::from_translation(p), &xi);
        assert_eq!(out.angular, xi.angular);
        assert!((out.linear - (p.cross(&xi.angular) + xi.linear)).norm() < 1e-15);
    }

    #[test]
    fn compose_inverse_examples() {
        let g = Pose::new(exp_so3(&Vec3::new(0.4, -0.2, 1.1)), Vec3::new(3.0, 1.0, -2.0));
        let e = g.compose(&g.inverse());
        assert!((e.to_homogeneous() - Matrix4::identity()).norm() < 1e-12);
        assert_eq!(Pose::identity().compose(&g), g);
    }

    #[test]
    fn nearest_rotation_repairs_drift() {
        let r = exp_so3(&Vec3::new(0.3, 0.2, -0.9));
        let noisy = r.matrix() + Matrix3::repeat(1e-6);
        let fixed = Rotation::nearest(noisy).unwrap();
        assert!(fixed.orthonormality_error() < 1e-14);
        assert!((fixed.matrix().determinant() - 1.0).abs() < 1e-14);
        assert!((fixed.matrix() - r.matrix()).norm() < 1e-5);
        assert!(Rotation::from_matrix(noisy).is_err());
    }

    proptest! {
        #[test]
        fn hat_vee_exact(w in vec3()) {
            prop_assert_eq!(vee3(&hat3(&w)).unwrap(), w);
            let s = hat3(&w);
            prop_assert_eq!(s.transpose(), -s);
        }

        #[test]
        fn adjoint_is_homomorphism(a in pose(), b in pose(), w in vec3(), v in vec3()) {
            let xi = Twist::new(w, v);
            let lhs = adjoint(&a.compose(&b), &xi);
            let rhs = adjoint(&a, &adjoint(&b, &xi));
            prop_assert!((lhs - rhs).norm() <= 1e-10);
            prop_assert!((lhs.angular.norm() - w.norm()).abs() <= 1e-12);
        }

        #[test]
        fn long_compose_chains_stay_on_so3(seq in proptest::collection::vec(pose(), 100)) {
            let g = seq.iter().fold(Pose::identity(), |acc, g| acc.compose(g));
            prop_assert!(g.rotation.orthonormality_error() <= 1e-9);
            prop_assert!((g.rotation.matrix().determinant() - 1.0).abs() <= 1e-9);
            let h = g.to_homogeneous();
            prop_assert_eq!(h.row(3).clone_owned(), Matrix4::identity().row(3).clone_owned());
        }
    }
}
