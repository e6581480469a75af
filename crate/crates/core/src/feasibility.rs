//! Formation patterns compatible with the nonholonomic constraint and the
//! leader/follower velocity limits.

use crate::error::{Error, Result};
use crate::lie::{adjoint, Pose, Rotation, Twist, Vec3};
use crate::uav::{euler_to_rotation, EulerAngles};

/// Below this norm the leader-induced velocity at the offset counts as zero.
pub const HOVER_TOL: f64 = 1e-9;
/// Residual bound for attitudes produced by [`synthesize_attitude`].
pub const SYNTH_RESIDUAL_TOL: f64 = 1e-10;
/// Residual bound for user-supplied attitudes.
pub const USER_RESIDUAL_TOL: f64 = 1e-9;

const LIMIT_TOL: f64 = 1e-12;

/// Whether the relative attitude is fixed or re-synthesized as the leader twist changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormationKind {
    /// Roto-translation invariant: constant relative pose.
    Rti,
    /// Only the relative position is constant.
    Prti,
}

impl FormationKind {
    pub fn label(self) -> &'static str {
        match self {
            FormationKind::Rti => "RTI",
            FormationKind::Prti => "P-RTI",
        }
    }
}

/// Desired pose of a follower relative to its (virtual) parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationSpec {
    pub position: Vec3,
    pub attitude: Rotation,
    pub angles: EulerAngles,
    pub kind: FormationKind,
}

impl FormationSpec {
    pub fn new(position: Vec3, angles: EulerAngles, kind: FormationKind) -> Self {
        FormationSpec {
            position,
            attitude: euler_to_rotation(&angles),
            angles,
            kind,
        }
    }

    /// Offset with the parent's own attitude.
    pub fn translation(position: Vec3) -> Self {
        FormationSpec::new(position, EulerAngles::zero(), FormationKind::Rti)
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.attitude, self.position)
    }
}

/// `omega_L x p + v_L`, the parent velocity seen at the offset point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauVector(pub Vec3);

impl TauVector {
    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Speed envelope of one vehicle class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityLimits {
    /// Bound on the angular speed, rad/s.
    pub angular_cap: f64,
    /// Minimum forward speed, m/s.
    pub linear_lower: f64,
    /// Maximum forward speed, m/s.
    pub linear_upper: f64,
}

impl VelocityLimits {
    pub fn new(angular_cap: f64, linear_lower: f64, linear_upper: f64) -> Result<Self> {
        if !(angular_cap > 0.0 && angular_cap.is_finite()) {
            return Err(Error::InvalidLimits(format!(
                "angular cap {angular_cap} must be positive"
            )));
        }
        if !(linear_lower > 0.0 && linear_lower < linear_upper && linear_upper.is_finite()) {
            return Err(Error::InvalidLimits(format!(
                "need 0 < lower < upper, got [{linear_lower}, {linear_upper}]"
            )));
        }
        Ok(VelocityLimits {
            angular_cap,
            linear_lower,
            linear_upper,
        })
    }

    pub fn contains_speed(&self, v: f64) -> bool {
        v >= self.linear_lower - LIMIT_TOL && v <= self.linear_upper + LIMIT_TOL
    }
}

/// Leader and follower envelopes satisfying the pairing condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitPair {
    pub leader: VelocityLimits,
    pub follower: VelocityLimits,
}

impl LimitPair {
    /// Requires equal angular caps and a follower speed band strictly containing the leader's.
    pub fn new(leader: VelocityLimits, follower: VelocityLimits) -> Result<Self> {
        let scale = leader.angular_cap.max(follower.angular_cap);
        if (leader.angular_cap - follower.angular_cap).abs() > 1e-12 * scale {
            return Err(Error::InvalidLimits(format!(
                "angular caps differ: leader {} vs follower {}",
                leader.angular_cap, follower.angular_cap
            )));
        }
        if !(follower.linear_lower < leader.linear_lower && leader.linear_upper < follower.linear_upper) {
            return Err(Error::InvalidLimits(format!(
                "follower band [{}, {}] must strictly contain leader band [{}, {}]",
                follower.linear_lower, follower.linear_upper, leader.linear_lower, leader.linear_upper
            )));
        }
        Ok(LimitPair { leader, follower })
    }

    pub fn max_offset(&self, leader_turns: bool) -> OffsetBound {
        max_offset_norm(&self.leader, &self.follower, leader_turns)
    }
}

/// Follower twist that holds `spec` exactly: `Ad_{g_bar^-1} xi_L`.
pub fn maintenance_velocity(spec: &FormationSpec, leader_twist: &Twist) -> Twist {
    adjoint(&spec.pose().inverse(), leader_twist)
}

/// Fails with [`Error::HoverRequired`] when the result vanishes.
pub fn tau(leader_twist: &Twist, p_bar: &Vec3) -> Result<TauVector> {
    let t = leader_twist.angular.cross(p_bar) + leader_twist.linear;
    if t.norm() <= HOVER_TOL {
        return Err(Error::HoverRequired);
    }
    Ok(TauVector(t))
}

/// Relative attitude whose body x-axis points along `t`; roll is free.
pub fn synthesize_attitude(t: &TauVector, roll: f64) -> EulerAngles {
    let horizontal = t.x().hypot(t.y());
    let yaw = t.y().atan2(t.x());
    let pitch = (-t.z()).atan2(horizontal);
    EulerAngles::new(roll, pitch, yaw)
}

/// Feasible spec for offset `p_bar` behind a parent moving with `leader_twist`.
pub fn synthesize_spec(leader_twist: &Twist, p_bar: &Vec3, roll: f64, kind: FormationKind) -> Result<FormationSpec> {
    let t = tau(leader_twist, p_bar)?;
    Ok(FormationSpec::new(*p_bar, synthesize_attitude(&t, roll), kind))
}

/// `|[e2 e3]^T R_bar^T (omega_L x p_bar + v_L)|`.
pub fn constraint_residual(spec: &FormationSpec, leader_twist: &Twist) -> f64 {
    let t = leader_twist.angular.cross(&spec.position) + leader_twist.linear;
    let body = spec.attitude.transpose() * t;
    body.y.hypot(body.z)
}

/// The same residual written through the Euler angles, one entry per constraint.
pub fn euler_constraint_residual(a: &EulerAngles, t: &TauVector) -> [f64; 2] {
    let (sf, cf) = a.roll.sin_cos();
    let (st, ct) = a.pitch.sin_cos();
    let (sp, cp) = a.yaw.sin_cos();
    let (tx, ty, tz) = (t.x(), t.y(), t.z());
    [
        (-sp * cf + cp * st * sf) * tx + (cp * cf + sp * st * sf) * ty + ct * sf * tz,
        (sp * sf + cp * st * cf) * tx + (-cp * sf + sp * st * cf) * ty + ct * cf * tz,
    ]
}

/// Whether `spec` can be held by a nonholonomic follower at `tol`.
pub fn is_feasible(spec: &FormationSpec, leader_twist: &Twist, tol: f64) -> bool {
    let t = leader_twist.angular.cross(&spec.position) + leader_twist.linear;
    t.norm() > HOVER_TOL && constraint_residual(spec, leader_twist) <= tol && (spec.attitude.transpose() * t).x > 0.0
}

/// Source of leader twists over time.
pub trait LeaderMotion {
    fn twist_at(&self, t: f64) -> Result<Twist>;
    /// True when the twist does not depend on time.
    fn is_time_invariant(&self) -> bool;
}

pub fn classify<M: LeaderMotion + ?Sized>(motion: &M) -> FormationKind {
    if motion.is_time_invariant() {
        FormationKind::Rti
    } else {
        FormationKind::Prti
    }
}

/// Identity relative attitude is feasible iff the leader does not rotate,
/// or it does not roll and the offset has no longitudinal component.
pub fn identity_attitude_feasible(leader_twist: &Twist, p_bar: &Vec3) -> bool {
    let w = &leader_twist.angular;
    w.norm() == 0.0 || (w.x == 0.0 && p_bar.x == 0.0)
}

/// Admissible offset norm under the speed limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OffsetBound {
    Unbounded,
    Bounded(f64),
}

impl OffsetBound {
    pub fn admits(&self, norm: f64) -> bool {
        match *self {
            OffsetBound::Unbounded => true,
            OffsetBound::Bounded(c) => norm <= c,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            OffsetBound::Unbounded => None,
            OffsetBound::Bounded(c) => Some(c),
        }
    }
}

/// Largest offset norm keeping the follower's forward speed inside its band.
pub fn max_offset_norm(leader: &VelocityLimits, follower: &VelocityLimits, leader_turns: bool) -> OffsetBound {
    if !leader_turns {
        return OffsetBound::Unbounded;
    }
    let a = leader.angular_cap;
    OffsetBound::Bounded(
        ((follower.linear_upper - leader.linear_upper) / a).min((leader.linear_lower - follower.linear_lower) / a),
    )
}

/// Follower speeds implied by holding a spec, against the follower limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationReport {
    pub angular_speed: f64,
    pub angular_cap: f64,
    pub angular_ok: bool,
    pub forward_speed: f64,
    pub linear_lower: f64,
    pub linear_upper: f64,
    pub linear_ok: bool,
}

impl SaturationReport {
    pub fn passed(&self) -> bool {
        self.angular_ok && self.linear_ok
    }
}

pub fn check_saturation(spec: &FormationSpec, leader_twist: &Twist, follower: &VelocityLimits) -> SaturationReport {
    let angular_speed = (spec.attitude.transpose() * leader_twist.angular).norm();
    let forward_speed = (leader_twist.angular.cross(&spec.position) + leader_twist.linear).norm();
    SaturationReport {
        angular_speed,
        angular_cap: follower.angular_cap,
        angular_ok: angular_speed <= follower.angular_cap + LIMIT_TOL,
        forward_speed,
        linear_lower: follower.linear_lower,
        linear_upper: follower.linear_upper,
        linear_ok: follower.contains_speed(forward_speed),
    }
}
