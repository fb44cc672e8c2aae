use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::Matrix2;

use crate::workspace::Pose;

pub type NodeId = usize;
pub type BucketId = usize;

const POSITION_QUANTUM: f64 = 1e-6;
const HEADING_QUANTUM: f64 = 1e-6;

/// Quantized robot configuration identifying the bucket a node lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PoseKey {
    x: i64,
    y: i64,
    theta: i64,
}

impl PoseKey {
    pub fn of(p: &Pose) -> Self {
        let turns = (TAU / HEADING_QUANTUM).round() as i64;
        PoseKey {
            x: (p.x / POSITION_QUANTUM).round() as i64,
            y: (p.y / POSITION_QUANTUM).round() as i64,
            theta: ((p.theta / HEADING_QUANTUM).round() as i64).rem_euclid(turns),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub pose: Pose,
    /// Covariance blocks of the planning scope, in scope order.
    pub cov_blocks: Vec<Matrix2<f64>>,
    /// Steps since the root; equals the number of parent hops.
    pub time: usize,
    /// Sum of scope determinants over the root path, root included.
    pub cost: f64,
    pub parent: Option<NodeId>,
    /// Index into the control set of the edge from the parent.
    pub control: Option<usize>,
    /// Scope index of the target held by the planning robot in this node.
    pub assignment: Option<usize>,
    /// Target the parent was steering towards when this node was created.
    pub pursued: Option<usize>,
    pub bucket: BucketId,
}

#[derive(Debug, Clone)]
pub struct Bucket {
    pub key: PoseKey,
    pub pose: Pose,
    pub nodes: Vec<NodeId>,
}

/// Append-only search tree with nodes grouped by shared configuration.
#[derive(Debug, Clone, Default)]
pub struct PlanTree {
    nodes: Vec<TreeNode>,
    buckets: Vec<Bucket>,
    bucket_of_key: HashMap<PoseKey, BucketId>,
    depth_index: Vec<Vec<NodeId>>,
    // buckets holding at least one node at the maximum depth
    deepest: Vec<BucketId>,
    in_deepest: Vec<bool>,
    child_keys: Vec<Vec<PoseKey>>,
}

impl PlanTree {
    pub fn new() -> Self {
        PlanTree::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn bucket(&self, id: BucketId) -> &Bucket {
        &self.buckets[id]
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket_id(&self, key: &PoseKey) -> Option<BucketId> {
        self.bucket_of_key.get(key).copied()
    }

    /// Number of nodes in the bucket at `key` (zero if it does not exist).
    pub fn bucket_len(&self, key: &PoseKey) -> usize {
        self.bucket_of_key.get(key).map_or(0, |&b| self.buckets[b].nodes.len())
    }

    pub fn max_depth(&self) -> usize {
        self.depth_index.len().saturating_sub(1)
    }

    pub fn nodes_at_depth(&self, depth: usize) -> &[NodeId] {
        self.depth_index.get(depth).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Buckets that intersect the set of maximum-depth nodes.
    pub fn deepest_buckets(&self) -> &[BucketId] {
        &self.deepest
    }

    pub fn is_deepest_bucket(&self, b: BucketId) -> bool {
        self.in_deepest[b]
    }

    /// True when the bucket at `key` already holds a node that is no later,
    /// no costlier and at least as certain in every block as the candidate.
    pub fn is_dominated(&self, key: &PoseKey, time: usize, cost: f64, cov_blocks: &[Matrix2<f64>]) -> bool {
        let Some(&b) = self.bucket_of_key.get(key) else {
            return false;
        };
        self.buckets[b].nodes.iter().any(|&n| {
            let other = &self.nodes[n];
            other.time <= time
                && other.cost <= cost
                && other
                    .cov_blocks
                    .iter()
                    .zip(cov_blocks)
                    .all(|(mine, theirs)| loewner_le(mine, theirs))
        })
    }

    pub(crate) fn has_child_at(&self, parent: NodeId, key: &PoseKey) -> bool {
        self.child_keys[parent].contains(key)
    }

    /// Adds a node, creating its bucket if needed. The node's `bucket`
    /// field is overwritten with the bucket it ends up in.
    pub fn insert(&mut self, mut node: TreeNode) -> NodeId {
        let id = self.nodes.len();
        let key = PoseKey::of(&node.pose);
        let bucket = match self.bucket_of_key.get(&key) {
            Some(&b) => b,
            None => {
                let b = self.buckets.len();
                self.buckets.push(Bucket {
                    key,
                    pose: node.pose,
                    nodes: Vec::new(),
                });
                self.in_deepest.push(false);
                self.bucket_of_key.insert(key, b);
                b
            }
        };
        node.bucket = bucket;
        self.buckets[bucket].nodes.push(id);
        if let Some(parent) = node.parent {
            self.child_keys[parent].push(key);
        }
        self.child_keys.push(Vec::new());

        let depth = node.time;
        if depth >= self.depth_index.len() {
            self.depth_index.resize(depth + 1, Vec::new());
            for &b in &self.deepest {
                self.in_deepest[b] = false;
            }
            self.deepest.clear();
        }
        self.depth_index[depth].push(id);
        if depth + 1 == self.depth_index.len() && !self.in_deepest[bucket] {
            self.in_deepest[bucket] = true;
            self.deepest.push(bucket);
        }
        self.nodes.push(node);
        id
    }

    /// Root-to-node sequence of control indices.
    pub fn controls_to(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes[id].time);
        let mut cur = id;
        while let Some(parent) = self.nodes[cur].parent {
            out.push(self.nodes[cur].control.expect("non-root nodes carry a control"));
            cur = parent;
        }
        out.reverse();
        out
    }

    /// Number of parent hops from `id` to the root.
    pub fn hops_to_root(&self, id: NodeId) -> usize {
        let mut hops = 0;
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            hops += 1;
            cur = p;
        }
        hops
    }
}

const LOEWNER_TOL: f64 = 1e-15;

/// `a ≼ b` in the Loewner order, i.e. `b - a` is positive semidefinite.
fn loewner_le(a: &Matrix2<f64>, b: &Matrix2<f64>) -> bool {
    let d = b - a;
    d[(0, 0)] >= -LOEWNER_TOL && d[(1, 1)] >= -LOEWNER_TOL && d.determinant() >= -LOEWNER_TOL * LOEWNER_TOL
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(pose: Pose, time: usize, parent: Option<NodeId>) -> TreeNode {
        TreeNode {
            pose,
            cov_blocks: vec![Matrix2::identity()],
            time,
            cost: 1.0,
            parent,
            control: parent.map(|_| 0),
            assignment: Some(0),
            pursued: Some(0),
            bucket: 0,
        }
    }

    #[test]
    fn buckets_and_depths() {
        let mut tree = PlanTree::new();
        let a = Pose::new(0.0, 0.0, 0.0);
        let b = Pose::new(0.1, 0.0, 0.0);
        let root = tree.insert(node(a, 0, None));
        assert_eq!(tree.deepest_buckets(), &[0]);
        let n1 = tree.insert(node(b, 1, Some(root)));
        let n2 = tree.insert(node(a, 1, Some(root)));
        assert_eq!(tree.bucket_count(), 2);
        assert_eq!(tree.node(n2).bucket, tree.node(root).bucket);
        assert_eq!(tree.max_depth(), 1);
        let mut deepest = tree.deepest_buckets().to_vec();
        deepest.sort();
        assert_eq!(deepest, vec![0, 1]);
        let n3 = tree.insert(node(b, 2, Some(n2)));
        assert_eq!(tree.deepest_buckets(), &[tree.node(n1).bucket]);
        assert_eq!(tree.hops_to_root(n3), 2);
        assert_eq!(tree.controls_to(n3), vec![0, 0]);
        assert!(tree.has_child_at(root, &PoseKey::of(&b)));
    }

    #[test]
    fn dominance() {
        let mut tree = PlanTree::new();
        let a = Pose::new(0.0, 0.0, 0.0);
        tree.insert(node(a, 1, None));
        let key = PoseKey::of(&a);
        let same = [Matrix2::identity()];
        let tighter = [Matrix2::identity() * 0.5];
        assert!(tree.is_dominated(&key, 1, 1.0, &same));
        assert!(tree.is_dominated(&key, 2, 1.5, &same));
        assert!(!tree.is_dominated(&key, 0, 1.5, &same));
        assert!(!tree.is_dominated(&key, 2, 1.5, &tighter));
        assert!(!tree.is_dominated(&PoseKey::of(&Pose::new(1.0, 0.0, 0.0)), 2, 1.5, &same));
    }

    #[test]
    fn heading_key_wraps_around() {
        let just_below = Pose {
            x: 1.0,
            y: 1.0,
            theta: TAU - 1e-9,
        };
        assert_eq!(PoseKey::of(&just_below), PoseKey::of(&Pose::new(1.0, 1.0, 0.0)));
    }
}
