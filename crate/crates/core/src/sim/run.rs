//! Closed-loop swarm simulation.

use rayon::prelude::*;

use crate::controller::{control, error_coordinates, virtual_leader};
use crate::error::{Error, Result};
use crate::feasibility::{FormationKind, FormationSpec, OffsetBound};
use crate::lie::{Pose, Twist};
use crate::sim::plan::{initial_poses, plan, plan_nodes, NodePlan};
use crate::sim::scenario::Scenario;
use crate::topology::{virtual_parent, virtual_parent_geodesic, NodeId, ParentSnapshot, ParentVelocity, LEADER};
use crate::uav::{rotation_to_euler, step, EulerAngles, UavState};

/// One logged sample of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub uav_id: NodeId,
    pub pose: Pose,
    /// Twist commanded at this tick.
    pub twist: Twist,
    /// Norm of the tracking error coordinates; zero for the leader.
    pub err_norm: f64,
    /// Attitude relative to the leader.
    pub rel: EulerAngles,
    pub sat_flags: u8,
}

/// Rows ordered by tick, then by vehicle id.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub node_count: usize,
    pub step: f64,
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn ticks(&self) -> usize {
        self.rows.len() / self.node_count
    }

    pub fn tick(&self, k: usize) -> &[LogRow] {
        &self.rows[k * self.node_count..(k + 1) * self.node_count]
    }

    pub fn row(&self, k: usize, id: NodeId) -> &LogRow {
        &self.rows[k * self.node_count + id]
    }

    pub fn series(&self, id: NodeId) -> impl Iterator<Item = &LogRow> + '_ {
        self.rows.iter().skip(id).step_by(self.node_count)
    }

    /// Tick index closest to time `t`.
    pub fn tick_at(&self, t: f64) -> usize {
        ((t / self.step).round() as usize).min(self.ticks() - 1)
    }

    /// Largest follower error over ticks `from..to`.
    pub fn max_error(&self, from: usize, to: usize) -> f64 {
        (from..to.min(self.ticks()))
            .flat_map(|k| self.tick(k)[1..].iter().map(|r| r.err_norm))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|r| {
            r.t.is_finite()
                && r.pose.position.iter().all(|x| x.is_finite())
                && r.pose.rotation.matrix().iter().all(|x| x.is_finite())
                && r.twist.is_finite()
                && r.err_norm.is_finite()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Evaluate the followers of one graph layer concurrently.
    pub parallel: bool,
}

#[derive(Debug, Clone, Copy)]
struct NodeStep {
    twist: Twist,
    err_norm: f64,
    flags: u8,
}

/// Offset of every node from the leader in the nominal formation.
pub fn composed_offsets(plans: &[NodePlan]) -> Vec<Pose> {
    plans.iter().map(|p| p.offset).collect()
}

/// Rejects scenarios whose formation cannot respect the configured speed limits.
pub fn check_limits(scenario: &Scenario, plans: &[NodePlan]) -> Result<()> {
    let Some(limits) = scenario.limits else {
        return Ok(());
    };
    let speed = scenario.profile.speed;
    if !limits.leader.contains_speed(speed) {
        return Err(Error::Infeasible {
            node: LEADER,
            reason: format!(
                "leader speed {speed} outside [{}, {}]",
                limits.leader.linear_lower, limits.leader.linear_upper
            ),
        });
    }
    let w = scenario.profile.max_angular_speed(scenario.duration);
    if w > limits.leader.angular_cap {
        return Err(Error::Infeasible {
            node: LEADER,
            reason: format!("leader angular speed {w} exceeds {}", limits.leader.angular_cap),
        });
    }
    let bound = limits.max_offset(scenario.profile.turns());
    for (node, offset) in composed_offsets(plans).iter().enumerate().skip(1) {
        let norm = offset.position.norm();
        if !bound.admits(norm) {
            let c = match bound {
                OffsetBound::Bounded(c) => c,
                OffsetBound::Unbounded => f64::INFINITY,
            };
            return Err(Error::Infeasible {
                node,
                reason: format!("offset from the leader {norm:.3} m exceeds the admissible {c:.3} m"),
            });
        }
    }
    Ok(())
}

fn evaluate(
    scenario: &Scenario,
    node: NodeId,
    poses: &[Pose],
    commands: &[Twist],
    spec: &FormationSpec,
) -> Result<NodeStep> {
    let snapshot = ParentSnapshot::gather(&scenario.topology, node, poses, commands);
    let (pose, twist) = match scenario.parent_velocity {
        ParentVelocity::Blend => virtual_parent(&scenario.topology, node, &snapshot)?,
        ParentVelocity::Geodesic => virtual_parent_geodesic(&scenario.topology, node, &snapshot, scenario.step)?,
    };
    let parent = UavState::new(pose, twist);
    let limits = scenario.limits.as_ref().map(|l| &l.follower);
    let out = control(&parent, &poses[node], spec, &scenario.gains, limits)?;
    let (target, _) = virtual_leader(&parent, spec);
    let err_norm = error_coordinates(&target, &poses[node])?.norm();
    Ok(NodeStep {
        twist: out.twist,
        err_norm,
        flags: out.flags,
    })
}

fn runtime(tick: usize, node: NodeId) -> impl FnOnce(Error) -> Error {
    move |e| Error::Runtime {
        tick,
        node,
        source: Box::new(e),
    }
}

pub fn run(scenario: &Scenario) -> Result<TrajectoryLog> {
    run_with(scenario, RunOptions::default())
}

/// Simulates ticks `0..=steps`; every node reads the state committed at the
/// start of the tick and all nodes advance together.
pub fn run_with(scenario: &Scenario, options: RunOptions) -> Result<TrajectoryLog> {
    scenario.validate()?;
    let h = scenario.step;
    let n = scenario.steps();
    let count = scenario.node_count();
    let topo = &scenario.topology;

    let first = plan(scenario, &scenario.profile.twist_at(0.0)?)?;
    check_limits(scenario, &first)?;
    let mut poses = initial_poses(scenario, &first)?;
    let mut specs: Vec<FormationSpec> = first.iter().map(|p| p.spec).collect();
    let resynthesize = scenario.kind() == FormationKind::Prti;

    let mut rows = Vec::with_capacity((n + 1) * count);
    let mut commands = vec![Twist::zero(); count];
    let mut steps = vec![
        NodeStep {
            twist: Twist::zero(),
            err_norm: 0.0,
            flags: 0,
        };
        count
    ];

    for k in 0..=n {
        let t = k as f64 * h;
        let leader_twist = scenario.profile.twist_at(t).map_err(runtime(k, LEADER))?;
        if resynthesize && k > 0 {
            for (node, r) in plan_nodes(scenario, &leader_twist).into_iter().enumerate() {
                specs[node] = r.map_err(runtime(k, node))?.spec;
            }
        }
        commands[LEADER] = leader_twist;
        steps[LEADER].twist = leader_twist;

        for layer in &topo.layers()[1..] {
            let results: Vec<Result<NodeStep>> = if options.parallel {
                layer
                    .par_iter()
                    .map(|&node| evaluate(scenario, node, &poses, &commands, &specs[node]))
                    .collect()
            } else {
                layer
                    .iter()
                    .map(|&node| evaluate(scenario, node, &poses, &commands, &specs[node]))
                    .collect()
            };
            for (&node, r) in layer.iter().zip(results) {
                let s = r.map_err(runtime(k, node))?;
                commands[node] = s.twist;
                steps[node] = s;
            }
        }

        let leader_rotation = poses[LEADER].rotation.transpose();
        for (id, s) in steps.iter().enumerate() {
            rows.push(LogRow {
                t,
                uav_id: id,
                pose: poses[id],
                twist: s.twist,
                err_norm: s.err_norm,
                rel: rotation_to_euler(&(leader_rotation * poses[id].rotation)).angles,
                sat_flags: s.flags,
            });
        }

        if k < n {
            for (pose, twist) in poses.iter_mut().zip(&commands) {
                *pose = step(&UavState::new(*pose, *twist), twist, h);
            }
        }
    }

    Ok(TrajectoryLog {
        node_count: count,
        step: h,
        rows,
    })
}
