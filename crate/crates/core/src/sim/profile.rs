//! Leader reference motion: constant forward speed plus a scheduled angular velocity.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::feasibility::LeaderMotion;
use crate::lie::{Twist, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Line,
    Helix,
    Piecewise,
}

/// Time dependence of one schedule entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentShape {
    /// `omega * sin(frequency_pi * pi * (t - origin))`.
    Sine {
        frequency_pi: f64,
        origin: f64,
    },
    Const,
}

/// Angular velocity over `(start, end]`; the first segment also owns `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    /// `None` extends the segment indefinitely.
    pub end: Option<f64>,
    pub omega: Vec3,
    pub shape: SegmentShape,
}

impl Segment {
    fn value(&self, t: f64) -> Vec3 {
        match self.shape {
            SegmentShape::Sine { frequency_pi, origin } => self.omega * (frequency_pi * PI * (t - origin)).sin(),
            SegmentShape::Const => self.omega,
        }
    }

    /// Upper bound on `|d omega / dt|` inside the segment.
    fn rate_bound(&self) -> f64 {
        match self.shape {
            SegmentShape::Sine { frequency_pi, .. } => self.omega.norm() * frequency_pi.abs() * PI,
            SegmentShape::Const => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderProfile {
    pub kind: ProfileKind,
    /// Forward speed, m/s.
    pub speed: f64,
    /// Constant angular velocity of a helix profile.
    pub omega: Vec3,
    pub segments: Vec<Segment>,
}

fn check_speed(speed: f64) -> Result<()> {
    if speed > 0.0 && speed.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidScenario(format!("leader speed {speed} must be positive")))
    }
}

impl LeaderProfile {
    pub fn line(speed: f64) -> Result<Self> {
        check_speed(speed)?;
        Ok(LeaderProfile {
            kind: ProfileKind::Line,
            speed,
            omega: Vec3::zeros(),
            segments: Vec::new(),
        })
    }

    pub fn helix(speed: f64, omega: Vec3) -> Result<Self> {
        check_speed(speed)?;
        if !omega.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidScenario("helix angular velocity is not finite".into()));
        }
        Ok(LeaderProfile {
            kind: ProfileKind::Helix,
            speed,
            omega,
            segments: Vec::new(),
        })
    }

    /// Segments must start at 0 and abut without gaps or overlaps.
    pub fn piecewise(speed: f64, segments: Vec<Segment>) -> Result<Self> {
        check_speed(speed)?;
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidScenario("piecewise profile has no segments".into()))?;
        if first.start != 0.0 {
            return Err(Error::InvalidScenario(format!(
                "schedule starts at {} instead of 0",
                first.start
            )));
        }
        for (i, s) in segments.iter().enumerate() {
            if !s.omega.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "segment {i} angular velocity is not finite"
                )));
            }
            match s.end {
                Some(end) if end.is_nan() || end <= s.start => {
                    return Err(Error::InvalidScenario(format!(
                        "segment {i} is empty: ({}, {end}]",
                        s.start
                    )));
                }
                None if i + 1 != segments.len() => {
                    return Err(Error::InvalidScenario(format!(
                        "only the last segment may be open-ended ({i})"
                    )));
                }
                _ => {}
            }
            if let Some(next) = segments.get(i + 1) {
                if s.end != Some(next.start) {
                    return Err(Error::InvalidScenario(format!(
                        "segment {} starts at {} but segment {i} ends at {:?}",
                        i + 1,
                        next.start,
                        s.end
                    )));
                }
            }
        }
        Ok(LeaderProfile {
            kind: ProfileKind::Piecewise,
            speed,
            omega: Vec3::zeros(),
            segments,
        })
    }

    /// Pitch oscillation, planar turn, level flight, then a spatial turn on a fixed schedule.
    pub fn maneuver(speed: f64) -> Self {
        let sine = |start: f64| SegmentShape::Sine {
            frequency_pi: 0.1,
            origin: start,
        };
        let segments = vec![
            Segment {
                start: 0.0,
                end: Some(20.0),
                omega: Vec3::new(0.0, -0.15, 0.0),
                shape: sine(0.0),
            },
            Segment {
                start: 20.0,
                end: Some(30.0),
                omega: Vec3::new(0.0, 0.0, -0.25),
                shape: sine(20.0),
            },
            Segment {
                start: 30.0,
                end: Some(50.0),
                omega: Vec3::zeros(),
                shape: SegmentShape::Const,
            },
            Segment {
                start: 50.0,
                end: Some(55.0),
                omega: Vec3::new(0.1, 0.15, 0.2),
                shape: sine(50.0),
            },
            Segment {
                start: 55.0,
                end: None,
                omega: Vec3::new(0.1, 0.15, 0.2),
                shape: SegmentShape::Const,
            },
        ];
        LeaderProfile::piecewise(speed, segments).expect("fixed schedule is valid")
    }

    /// Last time covered by the schedule.
    pub fn horizon(&self) -> f64 {
        match self.kind {
            ProfileKind::Piecewise => self.segments.last().and_then(|s| s.end).unwrap_or(f64::INFINITY),
            _ => f64::INFINITY,
        }
    }

    /// Segment boundaries strictly inside the schedule.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    pub fn twist_at(&self, t: f64) -> Result<Twist> {
        if t.is_nan() || t < 0.0 || t > self.horizon() {
            return Err(Error::OutOfSchedule(t));
        }
        let omega = match self.kind {
            ProfileKind::Line => Vec3::zeros(),
            ProfileKind::Helix => self.omega,
            ProfileKind::Piecewise => {
                let idx = self
                    .segments
                    .iter()
                    .position(|s| s.end.is_none_or(|end| t <= end))
                    .ok_or(Error::OutOfSchedule(t))?;
                self.segments[idx].value(t)
            }
        };
        Ok(Twist::new(omega, Vec3::new(self.speed, 0.0, 0.0)))
    }

    /// Largest angular speed over `[0, horizon]`.
    pub fn max_angular_speed(&self, horizon: f64) -> f64 {
        match self.kind {
            ProfileKind::Line => 0.0,
            ProfileKind::Helix => self.omega.norm(),
            ProfileKind::Piecewise => self
                .segments
                .iter()
                .filter(|s| s.start <= horizon)
                .map(|s| s.omega.norm())
                .fold(0.0, f64::max),
        }
    }

    /// Bound on `|d omega / dt|` anywhere on the schedule.
    pub fn max_angular_rate(&self) -> f64 {
        self.segments.iter().map(Segment::rate_bound).fold(0.0, f64::max)
    }

    pub fn turns(&self) -> bool {
        match self.kind {
            ProfileKind::Line => false,
            ProfileKind::Helix => self.omega.norm() > 0.0,
            ProfileKind::Piecewise => self.segments.iter().any(|s| s.omega.norm() > 0.0),
        }
    }
}

impl LeaderMotion for LeaderProfile {
    fn twist_at(&self, t: f64) -> Result<Twist> {
        LeaderProfile::twist_at(self, t)
    }

    fn is_time_invariant(&self) -> bool {
        match self.kind {
            ProfileKind::Line | ProfileKind::Helix => true,
            ProfileKind::Piecewise => self
                .segments
                .iter()
                .all(|s| s.shape == SegmentShape::Const && s.omega == self.segments[0].omega),
        }
    }
}
