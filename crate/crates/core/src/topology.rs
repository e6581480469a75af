//! Directed acyclic communication graph and the virtual parent of each node.
//!
//! A node with several parents tracks their geometric convex combination:
//! poses are folded left-to-right by geodesic interpolation on SE(3) and
//! twists by the matching affine blend. Parent order is ascending node index.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::lie::{exp_se3, log_se3, Pose, Twist};

pub type NodeId = usize;

/// The leader / root node.
pub const LEADER: NodeId = 0;

/// Communication graph over `N + 1` vehicles, node 0 being the leader.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmTopology {
    parents: Vec<Vec<NodeId>>,
    weights: Vec<Vec<f64>>,
    order: Vec<NodeId>,
    layers: Vec<Vec<NodeId>>,
}

impl SwarmTopology {
    /// Builds the graph from `(parent, child)` edges.
    ///
    /// Nodes missing from `weights` get the running-mean weights
    /// `lambda_j = 1 / (j + 1)`.
    pub fn new(node_count: usize, edges: &[(NodeId, NodeId)], weights: &BTreeMap<NodeId, Vec<f64>>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidTopology("graph has no nodes".into()));
        }
        let mut parent_sets = vec![BTreeSet::new(); node_count];
        for &(parent, child) in edges {
            if parent >= node_count || child >= node_count {
                return Err(Error::InvalidTopology(format!(
                    "edge {parent}->{child} references a node outside 0..{node_count}"
                )));
            }
            if parent == child {
                return Err(Error::CycleDetected);
            }
            if !parent_sets[child].insert(parent) {
                return Err(Error::InvalidTopology(format!("duplicate edge {parent}->{child}")));
            }
        }
        let parents: Vec<Vec<NodeId>> = parent_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let order = topological_order(&parents)?;

        if !parents[LEADER].is_empty() {
            return Err(Error::InvalidTopology("the leader (node 0) cannot have parents".into()));
        }
        if let Some(orphan) = (1..node_count).find(|&i| parents[i].is_empty()) {
            return Err(Error::InvalidTopology(format!("node {orphan} has no parent")));
        }
        if let Some(&bad) = weights.keys().find(|&&k| k >= node_count) {
            return Err(Error::InvalidTopology(format!("weights given for unknown node {bad}")));
        }

        let mut all_weights = Vec::with_capacity(node_count);
        for (i, ps) in parents.iter().enumerate() {
            let expected = ps.len().saturating_sub(1);
            let w = match weights.get(&i) {
                Some(w) => {
                    if w.len() != expected {
                        return Err(Error::InvalidTopology(format!(
                            "node {i} has {} parents and needs {expected} weights, got {}",
                            ps.len(),
                            w.len()
                        )));
                    }
                    if let Some(x) = w.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                        return Err(Error::InvalidTopology(format!("node {i} weight {x} outside [0, 1]")));
                    }
                    w.clone()
                }
                None => default_weights(ps.len()),
            };
            all_weights.push(w);
        }

        let mut depth = vec![0usize; node_count];
        for &i in &order {
            depth[i] = parents[i].iter().map(|&p| depth[p] + 1).max().unwrap_or(0);
        }
        let max_depth = depth.iter().copied().max().unwrap_or(0);
        let mut layers = vec![Vec::new(); max_depth + 1];
        for &i in &order {
            layers[depth[i]].push(i);
        }

        Ok(SwarmTopology {
            parents,
            weights: all_weights,
            order,
            layers,
        })
    }

    /// Leader-only graph.
    pub fn leader_only() -> Self {
        SwarmTopology::new(1, &[], &BTreeMap::new()).expect("single node graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    pub fn follower_count(&self) -> usize {
        self.parents.len() - 1
    }

    /// Parents of `node` in ascending index order.
    pub fn parents(&self, node: NodeId) -> &[NodeId] {
        &self.parents[node]
    }

    pub fn weights(&self, node: NodeId) -> &[f64] {
        &self.weights[node]
    }

    /// Nodes ordered so that each appears after all of its parents.
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    /// Nodes grouped by depth; a layer only depends on earlier layers.
    pub fn layers(&self) -> &[Vec<NodeId>] {
        &self.layers
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect()
    }
}

/// `lambda_j = 1 / (j + 1)` for `j = 1..count-1`.
pub fn default_weights(parent_count: usize) -> Vec<f64> {
    (1..parent_count).map(|j| 1.0 / (j as f64 + 1.0)).collect()
}

/// Kahn's algorithm over per-node parent lists; ties go to the lowest index.
pub fn topological_order(parents: &[Vec<NodeId>]) -> Result<Vec<NodeId>> {
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    let mut pending = vec![0usize; n];
    for (child, ps) in parents.iter().enumerate() {
        for &p in ps {
            if p >= n {
                return Err(Error::InvalidTopology(format!("parent {p} out of range")));
            }
            children[p].push(child);
            pending[child] += 1;
        }
    }
    let mut ready: BTreeSet<NodeId> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != n {
        return Err(Error::CycleDetected);
    }
    Ok(order)
}

fn check_weight_count(parents: usize, weights: usize) -> Result<()> {
    if parents == 0 {
        return Err(Error::InvalidTopology("convex combination of no parents".into()));
    }
    if weights != parents - 1 {
        return Err(Error::InvalidTopology(format!(
            "{parents} parents need {} weights, got {weights}",
            parents - 1
        )));
    }
    Ok(())
}

/// Geometric convex combination of poses.
pub fn convex_pose(poses: &[Pose], weights: &[f64]) -> Result<Pose> {
    check_weight_count(poses.len(), weights.len())?;
    let mut acc = poses[0];
    for (next, &lambda) in poses[1..].iter().zip(weights) {
        let delta = log_se3(&acc.between(next))?;
        acc = acc.compose(&exp_se3(&(delta * lambda)));
    }
    Ok(acc)
}

/// Affine blend `(1 - lambda) xi_acc + lambda xi_next`, folded left-to-right.
pub fn convex_twist(twists: &[Twist], weights: &[f64]) -> Result<Twist> {
    check_weight_count(twists.len(), weights.len())?;
    Ok(twists[1..]
        .iter()
        .zip(weights)
        .fold(twists[0], |acc, (next, &lambda)| acc * (1.0 - lambda) + *next * lambda))
}

/// Poses and twists of one node's parents, in parent-list order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParentSnapshot {
    pub poses: Vec<Pose>,
    pub twists: Vec<Twist>,
}

impl ParentSnapshot {
    /// Gathers the parents of `node` from full-swarm state arrays.
    pub fn gather(topology: &SwarmTopology, node: NodeId, poses: &[Pose], twists: &[Twist]) -> Self {
        let ps = topology.parents(node);
        ParentSnapshot {
            poses: ps.iter().map(|&p| poses[p]).collect(),
            twists: ps.iter().map(|&p| twists[p]).collect(),
        }
    }
}

/// Pose and twist of the virtual parent of `node`.
pub fn virtual_parent(topology: &SwarmTopology, node: NodeId, snapshot: &ParentSnapshot) -> Result<(Pose, Twist)> {
    let expected = topology.parents(node).len();
    if snapshot.poses.len() != expected || snapshot.twists.len() != expected {
        return Err(Error::InvalidTopology(format!(
            "snapshot for node {node} has {} poses / {} twists, expected {expected}",
            snapshot.poses.len(),
            snapshot.twists.len()
        )));
    }
    let w = topology.weights(node);
    Ok((convex_pose(&snapshot.poses, w)?, convex_twist(&snapshot.twists, w)?))
}

/// How the twist of a virtual parent is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParentVelocity {
    /// Affine blend of the parent twists.
    #[default]
    Blend,
    /// Body velocity of the combined pose under one integration step.
    Geodesic,
}

/// Virtual parent whose twist is the exact one-step velocity of the combined pose.
///
/// Each parent is advanced by `exp(h xi)`; the result generally has lateral
/// velocity when the parents' attitudes differ. Single parents are returned as is.
pub fn virtual_parent_geodesic(
    topology: &SwarmTopology,
    node: NodeId,
    snapshot: &ParentSnapshot,
    h: f64,
) -> Result<(Pose, Twist)> {
    let (pose, blend) = virtual_parent(topology, node, snapshot)?;
    if snapshot.poses.len() == 1 {
        return Ok((pose, blend));
    }
    let next: Vec<Pose> = snapshot
        .poses
        .iter()
        .zip(&snapshot.twists)
        .map(|(g, xi)| g.compose(&exp_se3(&(*xi * h))))
        .collect();
    let next = convex_pose(&next, topology.weights(node))?;
    Ok((pose, log_se3(&pose.between(&next))? * (1.0 / h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{adjoint, exp_so3, Vec3};
    use crate::uav::{is_nonholonomic, NONHOLONOMIC_TOL};
    use proptest::prelude::*;

    fn diamond() -> SwarmTopology {
        SwarmTopology::new(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (1, 4), (2, 4)], &BTreeMap::new()).unwrap()
    }

    #[test]
    fn chain_order() {
        let t = SwarmTopology::new(3, &[(1, 2), (0, 1)], &BTreeMap::new()).unwrap();
        assert_eq!(t.order(), &[0, 1, 2]);
        assert_eq!(t.layers(), &[vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn diamond_order_respects_parents() {
        let t = diamond();
        assert_eq!(t.order()[0], 0);
        let pos: Vec<usize> = (0..5)
            .map(|i| t.order().iter().position(|&x| x == i).unwrap())
            .collect();
        for (p, c) in t.edges() {
            assert!(pos[p] < pos[c]);
        }
        assert_eq!(t.layers(), &[vec![0], vec![1, 2], vec![3, 4]]);
        assert_eq!(t.weights(3), &[0.5]);
    }

    #[test]
    fn cycles_are_rejected() {
        let err = SwarmTopology::new(3, &[(0, 1), (1, 2), (2, 1)], &BTreeMap::new());
        assert!(matches!(err, Err(Error::CycleDetected)));
        assert!(matches!(
            topological_order(&[vec![], vec![2], vec![1]]),
            Err(Error::CycleDetected)
        ));
    }

    #[test]
    fn structural_invariants() {
        assert!(SwarmTopology::new(3, &[(0, 1)], &BTreeMap::new()).is_err());
        assert!(SwarmTopology::new(2, &[(1, 0), (0, 1)], &BTreeMap::new()).is_err());
        let mut w = BTreeMap::new();
        w.insert(3, vec![1.5]);
        assert!(SwarmTopology::new(4, &[(0, 1), (0, 2), (1, 3), (2, 3)], &w).is_err());
        w.insert(3, vec![0.2, 0.3]);
        assert!(SwarmTopology::new(4, &[(0, 1), (0, 2), (1, 3), (2, 3)], &w).is_err());
        assert_eq!(default_weights(4), vec![0.5, 1.0 / 3.0, 0.25]);
    }

    #[test]
    fn convex_pose_examples() {
        let a = Pose::new(exp_so3(&Vec3::new(0.2, -0.4, 1.0)), Vec3::new(1.0, 2.0, 3.0));
        let b = Pose::new(exp_so3(&Vec3::new(-0.5, 0.1, 0.3)), Vec3::new(-2.0, 0.0, 4.0));
        assert_eq!(convex_pose(&[a], &[]).unwrap(), a);
        let same = convex_pose(&[a, a], &[0.37]).unwrap();
        assert!((same.to_homogeneous() - a.to_homogeneous()).norm() < 1e-14);
        let end = convex_pose(&[a, b], &[1.0]).unwrap();
        assert!((end.to_homogeneous() - b.to_homogeneous()).norm() < 1e-10);
        assert!(convex_pose(&[a, b], &[]).is_err());
    }

    #[test]
    fn convex_pose_surfaces_antipodal_parents() {
        let a = Pose::identity();
        let b = Pose::new(exp_so3(&Vec3::new(std::f64::consts::PI, 0.0, 0.0)), Vec3::zeros());
        assert!(matches!(convex_pose(&[a, b], &[0.5]), Err(Error::NearPiSingularity(_))));
    }

    #[test]
    fn convex_twist_examples() {
        let a = Twist::new(Vec3::new(0.1, 0.2, 0.3), Vec3::new(4.0, 0.0, 0.0));
        let b = Twist::new(Vec3::new(-0.3, 0.0, 0.5), Vec3::new(6.0, 0.0, 0.0));
        let c = Twist::new(Vec3::new(1.0, 1.0, 1.0), Vec3::new(9.0, 0.0, 0.0));
        assert_eq!(convex_twist(&[a], &[]).unwrap(), a);
        let mid = convex_twist(&[a, b], &[0.5]).unwrap();
        assert!((mid - (a + b) * 0.5).norm() < 1e-15);
        assert!(is_nonholonomic(&mid, NONHOLONOMIC_TOL));
        assert_eq!(convex_twist(&[a, b, c], &[0.0, 0.0]).unwrap(), a);
    }

    #[test]
    fn virtual_parent_examples() {
        let t = diamond();
        let g = Pose::new(exp_so3(&Vec3::new(0.1, 0.2, 0.3)), Vec3::new(1.0, 0.0, 0.0));
        let xi = Twist::new(Vec3::new(0.0, 0.05, 0.2), Vec3::new(5.0, 0.0, 0.0));
        let single = ParentSnapshot {
            poses: vec![g],
            twists: vec![xi],
        };
        assert_eq!(virtual_parent(&t, 1, &single).unwrap(), (g, xi));
        let double = ParentSnapshot {
            poses: vec![g, g],
            twists: vec![xi, xi],
        };
        let (vg, vxi) = virtual_parent(&t, 3, &double).unwrap();
        assert!((vg.to_homogeneous() - g.to_homogeneous()).norm() < 1e-14);
        assert!((vxi - xi).norm() < 1e-15);
        assert!(virtual_parent(&t, 3, &single).is_err());
    }

    #[test]
    fn virtual_parent_never_reads_own_state() {
        let t = diamond();
        for node in 1..t.node_count() {
            assert!(!t.parents(node).contains(&node));
            let pos = |i| t.order().iter().position(|&x| x == i).unwrap();
            assert!(t.parents(node).iter().all(|&p| pos(p) < pos(node)));
        }
    }

    #[test]
    fn geodesic_velocity_of_rigid_parents() {
        let t = diamond();
        let leader = Pose::new(exp_so3(&Vec3::new(0.1, -0.2, 0.3)), Vec3::new(5.0, 1.0, -2.0));
        let xi = Twist::new(Vec3::new(0.1, 0.15, 0.2), Vec3::new(5.0, 0.0, 0.0));
        let a = Pose::new(exp_so3(&Vec3::new(0.0, 0.2, -0.1)), Vec3::new(0.0, 5.0, 0.0));
        let b = Pose::new(exp_so3(&Vec3::new(0.1, -0.1, 0.15)), Vec3::new(-1.0, -5.0, 1.0));
        // parents rigidly attached to a common body moving with xi
        let snap = ParentSnapshot {
            poses: vec![leader.compose(&a), leader.compose(&b)],
            twists: vec![adjoint(&a.inverse(), &xi), adjoint(&b.inverse(), &xi)],
        };
        let c = convex_pose(&[a, b], &[0.5]).unwrap();
        let (g, v) = virtual_parent_geodesic(&t, 3, &snap, 0.01).unwrap();
        assert!((g.to_homogeneous() - leader.compose(&c).to_homogeneous()).norm() < 1e-12);
        let exact = adjoint(&c.inverse(), &xi);
        assert!((v - exact).norm() < 1e-9);
        let (_, blend) = virtual_parent(&t, 3, &snap).unwrap();
        assert!((blend - exact).norm() > 1e-3);

        let single = ParentSnapshot {
            poses: vec![leader],
            twists: vec![xi],
        };
        assert_eq!(virtual_parent_geodesic(&t, 1, &single, 0.01).unwrap(), (leader, xi));
    }

    fn nh_twist() -> impl Strategy<Value = Twist> {
        (proptest::array::uniform3(-1.0..1.0f64), 0.5..10.0f64)
            .prop_map(|(w, v)| Twist::new(Vec3::from(w), Vec3::new(v, 0.0, 0.0)))
    }

    proptest! {
        #[test]
        fn convex_twist_is_nonholonomic(
            twists in proptest::collection::vec(nh_twist(), 1..6),
            raw in proptest::collection::vec(0.0..=1.0f64, 5),
        ) {
            let w = &raw[..twists.len() - 1];
            let out = convex_twist(&twists, w).unwrap();
            prop_assert!(out.linear.y.abs() <= 1e-12 && out.linear.z.abs() <= 1e-12);
        }

        #[test]
        fn convex_pose_stays_on_se3(
            ws in proptest::collection::vec(proptest::array::uniform3(-0.8..0.8f64), 2..5),
            ps in proptest::collection::vec(proptest::array::uniform3(-10.0..10.0f64), 4),
            lambdas in proptest::collection::vec(0.0..=1.0f64, 3),
        ) {
            let poses: Vec<Pose> = ws.iter().zip(&ps)
                .map(|(w, p)| Pose::new(exp_so3(&Vec3::from(*w)), Vec3::from(*p)))
                .collect();
            let g = convex_pose(&poses, &lambdas[..poses.len() - 1]).unwrap();
            prop_assert!(g.rotation.orthonormality_error() <= 1e-9);
            prop_assert!((g.rotation.matrix().determinant() - 1.0).abs() <= 1e-9);
        }
    }
}
