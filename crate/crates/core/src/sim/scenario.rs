//! Scenario files: flat TOML sections describing the swarm, the leader motion
//! and the run parameters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::controller::ControlGains;
use crate::error::{Error, Result};
use crate::feasibility::{classify, FormationKind, LimitPair, VelocityLimits};
use crate::lie::{Pose, Twist, Vec3};
use crate::sim::profile::{LeaderProfile, Segment, SegmentShape};
use crate::topology::{NodeId, ParentVelocity, SwarmTopology};
use crate::uav::{euler_to_rotation, EulerAngles};

/// Per-follower formation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerConfig {
    pub id: NodeId,
    /// Offset from the virtual parent, in the parent's body frame.
    pub offset: Vec3,
    /// Free relative roll used when the attitude is synthesized.
    pub roll: f64,
    /// Fixed relative attitude instead of a synthesized one.
    pub attitude: Option<EulerAngles>,
    /// Initial deviation from the nominal pose, as exponential coordinates.
    pub perturb: Twist,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Simulated time, seconds.
    pub duration: f64,
    /// Integration step, seconds.
    pub step: f64,
    pub output_dir: Option<PathBuf>,
    pub parent_velocity: ParentVelocity,
    pub profile: LeaderProfile,
    pub gains: ControlGains,
    pub limits: Option<LimitPair>,
    pub leader_pose: Pose,
    pub topology: SwarmTopology,
    /// Indexed by node id minus one.
    pub followers: Vec<FollowerConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    name: String,
    duration: f64,
    step: Option<f64>,
    output_dir: Option<PathBuf>,
    parent_velocity: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    kind: String,
    speed: f64,
    omega: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    kp: f64,
    ka: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLimits {
    alpha: f64,
    leader_beta: [f64; 2],
    follower_beta: [f64; 2],
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeader {
    #[serde(default)]
    position: [f64; 3],
    #[serde(default)]
    euler: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUav {
    parents: Vec<NodeId>,
    weights: Option<Vec<f64>>,
    offset: [f64; 3],
    #[serde(default)]
    roll: f64,
    attitude: Option<[f64; 3]>,
    perturb: Option<[f64; 6]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    start: f64,
    end: Option<f64>,
    omega: [f64; 3],
    shape: String,
    frequency_pi: Option<f64>,
    origin: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct RawScenario {
    scenario: RawRun,
    profile: RawProfile,
    gains: Option<RawGains>,
    limits: Option<RawLimits>,
    leader: Option<RawLeader>,
    #[serde(flatten)]
    sections: BTreeMap<String, toml::Value>,
}

fn numbered<T: for<'de> Deserialize<'de>>(
    sections: &BTreeMap<String, toml::Value>,
    prefix: &str,
    first: usize,
) -> Result<Vec<T>> {
    let mut found = BTreeMap::new();
    for (key, value) in sections {
        let index = key
            .strip_prefix(prefix)
            .and_then(|rest| rest.parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidScenario(format!("unknown section [{key}]")))?;
        let parsed: T = value
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidScenario(format!("[{key}]: {}", e.message())))?;
        found.insert(index, parsed);
    }
    for (expected, &index) in (first..).zip(found.keys()) {
        if index != expected {
            return Err(Error::InvalidScenario(format!("missing section [{prefix}{expected}]")));
        }
    }
    Ok(found.into_values().collect())
}

fn to_segment(i: usize, raw: RawSegment) -> Result<Segment> {
    let shape = match raw.shape.as_str() {
        "sine" => SegmentShape::Sine {
            frequency_pi: raw
                .frequency_pi
                .ok_or_else(|| Error::InvalidScenario(format!("[segment_{i}] sine needs frequency_pi")))?,
            origin: raw.origin.unwrap_or(raw.start),
        },
        "const" => SegmentShape::Const,
        other => return Err(Error::InvalidScenario(format!("[segment_{i}] unknown shape {other:?}"))),
    };
    Ok(Segment {
        start: raw.start,
        end: raw.end,
        omega: Vec3::from(raw.omega),
        shape,
    })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text)?;
        let (uav_sections, rest): (BTreeMap<_, _>, BTreeMap<_, _>) =
            raw.sections.into_iter().partition(|(k, _)| k.starts_with("uav_"));
        let (segment_sections, unknown): (BTreeMap<_, _>, BTreeMap<_, _>) =
            rest.into_iter().partition(|(k, _)| k.starts_with("segment_"));
        if let Some(key) = unknown.keys().next() {
            return Err(Error::InvalidScenario(format!("unknown section [{key}]")));
        }
        let uavs: Vec<RawUav> = numbered(&uav_sections, "uav_", 1)?;
        let segments: Vec<RawSegment> = numbered(&segment_sections, "segment_", 1)?;

        let profile = match raw.profile.kind.as_str() {
            "line" => LeaderProfile::line(raw.profile.speed)?,
            "helix" => LeaderProfile::helix(
                raw.profile.speed,
                Vec3::from(
                    raw.profile
                        .omega
                        .ok_or_else(|| Error::InvalidScenario("helix profile needs omega".into()))?,
                ),
            )?,
            "piecewise" => LeaderProfile::piecewise(
                raw.profile.speed,
                segments
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| to_segment(i + 1, s))
                    .collect::<Result<_>>()?,
            )?,
            "maneuver" => LeaderProfile::maneuver(raw.profile.speed),
            other => return Err(Error::InvalidScenario(format!("unknown profile kind {other:?}"))),
        };
        if profile.kind != crate::sim::profile::ProfileKind::Piecewise && !segment_sections.is_empty() {
            return Err(Error::InvalidScenario(
                "segments given for a non-piecewise profile".into(),
            ));
        }
        if raw.profile.omega.is_some() && raw.profile.kind != "helix" {
            return Err(Error::InvalidScenario(
                "profile omega is only used by helix profiles".into(),
            ));
        }

        let gains = match raw.gains {
            Some(g) => ControlGains::new(g.kp, g.ka)?,
            None => ControlGains::default(),
        };
        let limits = raw
            .limits
            .map(|l| {
                LimitPair::new(
                    VelocityLimits::new(l.alpha, l.leader_beta[0], l.leader_beta[1])?,
                    VelocityLimits::new(l.alpha, l.follower_beta[0], l.follower_beta[1])?,
                )
            })
            .transpose()?;
        let leader = raw.leader.unwrap_or_default();
        let leader_pose = Pose::new(
            euler_to_rotation(&EulerAngles::new(leader.euler[0], leader.euler[1], leader.euler[2])),
            Vec3::from(leader.position),
        );

        let mut edges = Vec::new();
        let mut weights = BTreeMap::new();
        let mut followers = Vec::with_capacity(uavs.len());
        for (k, u) in uavs.into_iter().enumerate() {
            let id = k + 1;
            if u.parents.is_empty() {
                return Err(Error::InvalidScenario(format!("[uav_{id}] has no parents")));
            }
            edges.extend(u.parents.iter().map(|&p| (p, id)));
            if let Some(w) = u.weights {
                weights.insert(id, w);
            }
            let perturb = u.perturb.unwrap_or([0.0; 6]);
            followers.push(FollowerConfig {
                id,
                offset: Vec3::from(u.offset),
                roll: u.roll,
                attitude: u.attitude.map(|a| EulerAngles::new(a[0], a[1], a[2])),
                perturb: Twist::new(
                    Vec3::new(perturb[0], perturb[1], perturb[2]),
                    Vec3::new(perturb[3], perturb[4], perturb[5]),
                ),
            });
        }
        let topology = SwarmTopology::new(followers.len() + 1, &edges, &weights)?;

        let parent_velocity = match raw.scenario.parent_velocity.as_deref() {
            None | Some("blend") => ParentVelocity::Blend,
            Some("geodesic") => ParentVelocity::Geodesic,
            Some(other) => return Err(Error::InvalidScenario(format!("unknown parent_velocity {other:?}"))),
        };

        let scenario = Scenario {
            name: raw.scenario.name,
            duration: raw.scenario.duration,
            step: raw.scenario.step.unwrap_or(crate::uav::DEFAULT_STEP),
            output_dir: raw.scenario.output_dir,
            parent_velocity,
            profile,
            gains,
            limits,
            leader_pose,
            topology,
            followers,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Structural invariants; feasibility is checked by the planner.
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "duration {} must be positive",
                self.duration
            )));
        }
        if !(self.step > 0.0 && self.step <= self.duration) {
            return Err(Error::InvalidScenario(format!(
                "step {} must be positive and at most the duration",
                self.step
            )));
        }
        if self.duration > self.profile.horizon() {
            return Err(Error::InvalidScenario(format!(
                "duration {} exceeds the leader schedule ({} s)",
                self.duration,
                self.profile.horizon()
            )));
        }
        if self.followers.len() != self.topology.follower_count() {
            return Err(Error::InvalidScenario(
                "follower count does not match the topology".into(),
            ));
        }
        for f in &self.followers {
            let finite = f
                .offset
                .iter()
                .chain(f.perturb.to_vector().iter())
                .all(|x| x.is_finite());
            if !finite || !f.roll.is_finite() {
                return Err(Error::InvalidScenario(format!("[uav_{}] has non-finite values", f.id)));
            }
            if f.attitude.is_some() && self.kind() == FormationKind::Prti {
                return Err(Error::InvalidScenario(format!(
                    "[uav_{}] fixes its attitude, which needs a time-invariant leader profile",
                    f.id
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> FormationKind {
        classify(&self.profile)
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    /// Number of integration steps; ticks `0..=steps` are logged.
    pub fn steps(&self) -> usize {
        (self.duration / self.step).round() as usize
    }

    pub fn follower(&self, id: NodeId) -> &FollowerConfig {
        &self.followers[id - 1]
    }

    pub fn with_step(mut self, step: f64) -> Result<Self> {
        self.step = step;
        self.validate()?;
        Ok(self)
    }

    pub fn with_duration(mut self, duration: f64) -> Result<Self> {
        self.duration = duration;
        self.validate()?;
        Ok(self)
    }
}
