//! Fixed-wing UAV as a nonholonomic rigid body.

use std::f64::consts::PI;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::lie::{exp_se3, Pose, Rotation, Twist, Vec3};

/// Default tolerance for synthetic twists.
pub const NONHOLONOMIC_TOL: f64 = 1e-12;
/// Default tolerance for integrated quantities.
pub const NONHOLONOMIC_TOL_INTEGRATED: f64 = 1e-9;
/// Default integration step, seconds.
pub const DEFAULT_STEP: f64 = 0.01;

const GIMBAL_COS: f64 = 1e-10;

/// Configuration and body-frame velocity of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub pose: Pose,
    pub twist: Twist,
}

impl UavState {
    pub fn new(pose: Pose, twist: Twist) -> Self {
        UavState { pose, twist }
    }
}

/// Roll-pitch-yaw angles, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        EulerAngles { roll, pitch, yaw }
    }

    pub fn zero() -> Self {
        EulerAngles::default()
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

/// Result of [`rotation_to_euler`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    /// Pitch is at +/-pi/2; roll was fixed to zero and the free angle folded into yaw.
    pub degenerate: bool,
}

/// Maps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// `R = Rz(yaw) Ry(pitch) Rx(roll)` written out entry by entry.
pub fn euler_to_rotation(a: &EulerAngles) -> Rotation {
    let (sf, cf) = a.roll.sin_cos();
    let (st, ct) = a.pitch.sin_cos();
    let (sp, cp) = a.yaw.sin_cos();
    Rotation::from_matrix_unchecked(Matrix3::new(
        cp * ct,
        -sp * cf + cp * st * sf,
        sp * sf + cp * st * cf,
        sp * ct,
        cp * cf + sp * st * sf,
        -cp * sf + sp * st * cf,
        -st,
        ct * sf,
        ct * cf,
    ))
}

/// Inverse of [`euler_to_rotation`] for logging.
pub fn rotation_to_euler(r: &Rotation) -> EulerDecomposition {
    let m = r.matrix();
    let cos_pitch = m[(0, 0)].hypot(m[(1, 0)]);
    if cos_pitch <= GIMBAL_COS {
        let pitch = if m[(2, 0)] < 0.0 { PI / 2.0 } else { -PI / 2.0 };
        return EulerDecomposition {
            angles: EulerAngles::new(0.0, pitch, wrap_angle((-m[(0, 1)]).atan2(m[(1, 1)]))),
            degenerate: true,
        };
    }
    EulerDecomposition {
        angles: EulerAngles::new(
            wrap_angle(m[(2, 1)].atan2(m[(2, 2)])),
            (-m[(2, 0)]).atan2(cos_pitch),
            wrap_angle(m[(1, 0)].atan2(m[(0, 0)])),
        ),
        degenerate: false,
    }
}

/// `|v_y| <= tol && |v_z| <= tol`.
pub fn is_nonholonomic(xi: &Twist, tol: f64) -> bool {
    xi.linear.y.abs() <= tol && xi.linear.z.abs() <= tol
}

/// Exact flow of `g' = g xi^` for a twist held constant over `h` seconds.
pub fn step(state: &UavState, xi: &Twist, h: f64) -> Pose {
    debug_assert!(h > 0.0, "step size must be positive");
    state.pose.compose(&exp_se3(&(*xi * h)))
}

/// Roll/pitch/yaw rates produced by a body angular velocity.
pub fn euler_rates(a: &EulerAngles, omega: &Vec3) -> Result<Vec3> {
    let ct = a.pitch.cos();
    if ct.abs() <= 1e-9 {
        return Err(Error::GimbalLock);
    }
    let (sf, cf) = a.roll.sin_cos();
    let tt = a.pitch.tan();
    let m = Matrix3::new(1.0, tt * sf, tt * cf, 0.0, cf, -sf, 0.0, sf / ct, cf / ct);
    Ok(m * omega)
}
