//! Nominal formation: per-node specs and the twists that hold them, propagated
//! down the graph from the leader twist.

use crate::error::{Error, Result};
use crate::feasibility::{is_feasible, maintenance_velocity, synthesize_spec, FormationSpec, USER_RESIDUAL_TOL};
use crate::lie::{adjoint, exp_se3, Pose, Twist};
use crate::sim::scenario::Scenario;
use crate::topology::{convex_pose, convex_twist, NodeId, ParentVelocity, LEADER};

/// Nominal quantities for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePlan {
    /// Pose relative to the virtual parent; identity for the leader.
    pub spec: FormationSpec,
    /// Twist of the virtual parent when every node holds its spec.
    pub parent_twist: Twist,
    /// Twist of this node when every node holds its spec.
    pub twist: Twist,
    /// Pose relative to the leader when every node holds its spec.
    pub offset: Pose,
}

/// Plans every node, keeping per-node failures.
///
/// A node whose parent failed reports [`Error::Infeasible`].
pub fn plan_nodes(scenario: &Scenario, leader_twist: &Twist) -> Vec<Result<NodePlan>> {
    let topo = &scenario.topology;
    let kind = scenario.kind();
    let mut out: Vec<Option<Result<NodePlan>>> = (0..topo.node_count()).map(|_| None).collect();
    for &node in topo.order() {
        if node == LEADER {
            out[node] = Some(Ok(NodePlan {
                spec: FormationSpec::translation(crate::lie::Vec3::zeros()),
                parent_twist: *leader_twist,
                twist: *leader_twist,
                offset: Pose::identity(),
            }));
            continue;
        }
        let mut parents = Vec::new();
        let mut blocked = None;
        for &p in topo.parents(node) {
            match out[p].as_ref() {
                Some(Ok(plan)) => parents.push(*plan),
                _ => {
                    blocked = Some(p);
                    break;
                }
            }
        }
        let result = match blocked {
            Some(p) => Err(Error::Infeasible {
                node,
                reason: format!("parent {p} has no feasible plan"),
            }),
            None => plan_node(scenario, node, &parents, leader_twist, kind),
        };
        out[node] = Some(result);
    }
    out.into_iter().map(|r| r.expect("every node is visited")).collect()
}

fn plan_node(
    scenario: &Scenario,
    node: NodeId,
    parents: &[NodePlan],
    leader_twist: &Twist,
    kind: crate::feasibility::FormationKind,
) -> Result<NodePlan> {
    let cfg = scenario.follower(node);
    let weights = scenario.topology.weights(node);
    let offsets: Vec<Pose> = parents.iter().map(|p| p.offset).collect();
    let parent_offset = convex_pose(&offsets, weights)?;
    let parent_twist = match scenario.parent_velocity {
        ParentVelocity::Blend => {
            let twists: Vec<Twist> = parents.iter().map(|p| p.twist).collect();
            convex_twist(&twists, weights)?
        }
        // the virtual parent moves rigidly with the leader
        ParentVelocity::Geodesic => adjoint(&parent_offset.inverse(), leader_twist),
    };
    let spec = match cfg.attitude {
        Some(angles) => {
            let spec = FormationSpec::new(cfg.offset, angles, kind);
            if !is_feasible(&spec, &parent_twist, USER_RESIDUAL_TOL) {
                return Err(Error::Infeasible {
                    node,
                    reason: "configured attitude violates the nonholonomic constraint".into(),
                });
            }
            spec
        }
        None => synthesize_spec(&parent_twist, &cfg.offset, cfg.roll, kind)?,
    };
    Ok(NodePlan {
        spec,
        parent_twist,
        twist: maintenance_velocity(&spec, &parent_twist),
        offset: parent_offset.compose(&spec.pose()),
    })
}

/// All-or-nothing variant of [`plan_nodes`].
pub fn plan(scenario: &Scenario, leader_twist: &Twist) -> Result<Vec<NodePlan>> {
    plan_nodes(scenario, leader_twist)
        .into_iter()
        .enumerate()
        .map(|(node, r)| {
            r.map_err(|e| match e {
                Error::Infeasible { .. } => e,
                other => Error::Infeasible {
                    node,
                    reason: other.to_string(),
                },
            })
        })
        .collect()
}

/// Poses of all nodes when every node holds its spec, starting from `leader_pose`.
pub fn nominal_poses(plans: &[NodePlan], leader_pose: &Pose) -> Vec<Pose> {
    plans.iter().map(|p| leader_pose.compose(&p.offset)).collect()
}

/// Initial poses: each follower sits at its configured error from the virtual
/// leader built on its parents' initial poses, so its first error coordinates
/// equal the configured perturbation.
pub fn initial_poses(scenario: &Scenario, plans: &[NodePlan]) -> Result<Vec<Pose>> {
    let topo = &scenario.topology;
    let mut poses = vec![scenario.leader_pose; topo.node_count()];
    for &node in &topo.order()[1..] {
        let parents: Vec<Pose> = topo.parents(node).iter().map(|&p| poses[p]).collect();
        let target = convex_pose(&parents, topo.weights(node))?.compose(&plans[node].spec.pose());
        poses[node] = target.compose(&exp_se3(&scenario.follower(node).perturb));
    }
    Ok(poses)
}
