//! Follower controller: logarithmic feedback toward a virtual leader, truncated
//! to the nonholonomic input set and compensated by an extra body rotation.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::feasibility::{FormationSpec, VelocityLimits};
use crate::lie::{adjoint, log_se3, Pose, Rotation, Twist, Vec3};
use crate::uav::{wrap_angle, UavState};

/// Projected velocity norms at or below this leave the compensation factor at identity.
pub const DEGENERATE_NORM: f64 = 1e-9;

/// Forward speed clamped up to the lower limit.
pub const FLAG_SPEED_LOW: u8 = 1;
/// Forward speed clamped down to the upper limit.
pub const FLAG_SPEED_HIGH: u8 = 2;
/// Angular velocity scaled down to the cap.
pub const FLAG_ANGULAR_CAP: u8 = 4;
/// Standard linear velocity points behind the body.
pub const FLAG_REVERSE: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGains {
    /// Log-feedback gain, 1/s.
    pub kp: f64,
    /// Compensation gain.
    pub ka: f64,
}

impl ControlGains {
    pub fn new(kp: f64, ka: f64) -> Result<Self> {
        if !(kp > 0.0 && kp.is_finite() && ka > 0.0 && ka.is_finite()) {
            return Err(Error::InvalidGains(format!(
                "kp = {kp}, ka = {ka}; both must be positive"
            )));
        }
        Ok(ControlGains { kp, ka })
    }
}

impl Default for ControlGains {
    fn default() -> Self {
        ControlGains { kp: 1.0, ka: 1.0 }
    }
}

/// Fully actuated feedback twist before truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardVelocity {
    pub omega: Vec3,
    pub lambda: Vec3,
}

impl StandardVelocity {
    pub fn to_twist(&self) -> Twist {
        Twist::new(self.omega, self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Commanded twist; lateral and vertical speed are exactly zero.
    pub twist: Twist,
    pub standard: StandardVelocity,
    pub compensation: Vec3,
    /// Bitwise OR of the `FLAG_*` constants.
    pub flags: u8,
}

/// Pose rigidly attached to the leader at the formation offset, and its twist.
pub fn virtual_leader(leader: &UavState, spec: &FormationSpec) -> (Pose, Twist) {
    let offset = spec.pose();
    (leader.pose.compose(&offset), adjoint(&offset.inverse(), &leader.twist))
}

pub fn standard_velocity(
    leader: &UavState,
    follower_pose: &Pose,
    spec: &FormationSpec,
    gains: &ControlGains,
) -> Result<StandardVelocity> {
    let g_lf = leader.pose.between(follower_pose);
    let feedback = log_se3(&spec.pose().between(&g_lf))?;
    let xi = feedback * (-gains.kp) + adjoint(&g_lf.inverse(), &leader.twist);
    Ok(StandardVelocity {
        omega: xi.angular,
        lambda: xi.linear,
    })
}

/// Yaw and pitch that turn the body x-axis toward the projections of `lambda`
/// onto the x-y and x-z planes, in (-pi, pi]; zero for a degenerate projection.
pub fn compensation_angles(lambda: &Vec3) -> (f64, f64) {
    let yaw = if lambda.x.hypot(lambda.y) <= DEGENERATE_NORM {
        0.0
    } else {
        wrap_angle(lambda.y.atan2(lambda.x))
    };
    let pitch = if lambda.x.hypot(lambda.z) <= DEGENERATE_NORM {
        0.0
    } else {
        wrap_angle((-lambda.z).atan2(lambda.x))
    };
    (yaw, pitch)
}

/// The two compensation rotations `(R_z, R_y)` assembled column by column.
pub fn compensation_factors(lambda: &Vec3) -> (Rotation, Rotation) {
    let n = Vec3::new(lambda.x, lambda.y, 0.0);
    let rz = if n.norm() <= DEGENERATE_NORM {
        Rotation::identity()
    } else {
        let a = n / n.norm();
        let b = Vec3::z().cross(&a);
        Rotation::from_matrix_unchecked(Matrix3::from_columns(&[a, b, Vec3::z()]))
    };
    let m = Vec3::new(lambda.x, 0.0, lambda.z);
    let ry = if m.norm() <= DEGENERATE_NORM {
        Rotation::identity()
    } else {
        let a = m / m.norm();
        let c = a.cross(&Vec3::y());
        Rotation::from_matrix_unchecked(Matrix3::from_columns(&[a, Vec3::y(), c]))
    };
    (rz, ry)
}

/// Sum of the logarithms of the two compensation rotations.
///
/// Each factor is a planar rotation, so its logarithm is read off directly,
/// which stays defined at angle pi.
pub fn compensation_rotation(lambda: &Vec3) -> Vec3 {
    let (yaw, pitch) = compensation_angles(lambda);
    Vec3::new(0.0, pitch, yaw)
}

/// Nonholonomic follower command, optionally clamped to `limits`.
pub fn control(
    leader: &UavState,
    follower_pose: &Pose,
    spec: &FormationSpec,
    gains: &ControlGains,
    limits: Option<&VelocityLimits>,
) -> Result<ControlOutput> {
    let standard = standard_velocity(leader, follower_pose, spec, gains)?;
    let compensation = compensation_rotation(&standard.lambda);
    let mut omega = standard.omega + compensation * gains.ka;
    let mut vx = standard.lambda.x;
    let mut flags = 0;
    if standard.lambda.x < 0.0 {
        flags |= FLAG_REVERSE;
    }
    if let Some(l) = limits {
        if vx < l.linear_lower {
            vx = l.linear_lower;
            flags |= FLAG_SPEED_LOW;
        } else if vx > l.linear_upper {
            vx = l.linear_upper;
            flags |= FLAG_SPEED_HIGH;
        }
        let speed = omega.norm();
        if speed > l.angular_cap {
            omega *= l.angular_cap / speed;
            flags |= FLAG_ANGULAR_CAP;
        }
    }
    Ok(ControlOutput {
        twist: Twist::new(omega, Vec3::new(vx, 0.0, 0.0)),
        standard,
        compensation,
        flags,
    })
}

/// Exponential coordinates of the tracking error `g_C^-1 g_F`.
pub fn error_coordinates(virtual_leader_pose: &Pose, follower_pose: &Pose) -> Result<Twist> {
    log_se3(&virtual_leader_pose.between(follower_pose))
}
