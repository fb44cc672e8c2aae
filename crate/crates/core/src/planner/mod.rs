//! Single-robot sampling-based planner over (pose, covariance, time) states.
//!
//! The tree grows by picking a configuration bucket (biased towards the
//! deepest level), picking a control (biased towards the assigned target)
//! and extending every node of the bucket with that control. Each new node
//! carries its own target assignment, which drives the control bias of its
//! descendants.

mod assign;
mod sampling;
mod tree;

use nalgebra::{Matrix2, Point2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use assign::assign_targets;
pub use sampling::{sample_bucket, sample_control, steering_control, GeodesicCache};
pub use tree::{Bucket, BucketId, NodeId, PlanTree, PoseKey, TreeNode};

use crate::error::{AiaError, Result};
use crate::estimation::{measurement_update_cov, predict_mean, LandmarkBelief, LandmarkDynamics, SensorModel};
use crate::workspace::{apply_motion, ControlInput, ControlSet, Pose, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GoalMode {
    /// Every scope landmark below the threshold.
    AllOfScope,
    /// The landmark being pursued below the threshold.
    #[default]
    OneOfScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub p_v: f64,
    pub p_u: f64,
    pub n_max: usize,
    pub goal_mode: GoalMode,
    pub delta: f64,
    /// Return as soon as the goal set becomes non-empty instead of spending
    /// the whole sample budget.
    #[serde(default = "default_true")]
    pub stop_at_first_goal: bool,
    /// Most nodes a single bucket may hold; extensions into a full bucket
    /// are dropped.
    #[serde(default = "default_bucket_capacity")]
    pub bucket_capacity: usize,
}

fn default_bucket_capacity() -> usize {
    64
}

fn default_true() -> bool {
    true
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            p_v: 0.9,
            p_u: 0.9,
            n_max: 20_000,
            goal_mode: GoalMode::OneOfScope,
            delta: 1.8e-6,
            stop_at_first_goal: true,
            bucket_capacity: default_bucket_capacity(),
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_v > 0.5 && self.p_v < 1.0) {
            return Err(AiaError::validation("planner.p_v", "must lie in (0.5, 1)"));
        }
        if !(self.p_u > 0.5 && self.p_u < 1.0) {
            return Err(AiaError::validation("planner.p_u", "must lie in (0.5, 1)"));
        }
        if self.bucket_capacity < 1 {
            return Err(AiaError::validation("planner.bucket_capacity", "must be at least 1"));
        }
        if self.n_max < 1 {
            return Err(AiaError::validation("planner.n_max", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(AiaError::validation("delta", "must be positive"));
        }
        Ok(())
    }
}

/// A landmark the robot is responsible for, with what it knows about it.
#[derive(Debug, Clone)]
pub struct ScopeLandmark {
    pub belief: LandmarkBelief,
    pub dynamics: LandmarkDynamics,
}

/// Everything fixed for the duration of one planning call.
#[derive(Debug, Clone, Copy)]
pub struct PlanningContext<'a> {
    pub workspace: &'a Workspace,
    pub sensor: &'a SensorModel,
    pub controls: &'a ControlSet,
    pub scope: &'a [ScopeLandmark],
    /// Absolute simulation step of the root, used to index landmark inputs.
    pub start_time: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TreeStats {
    pub nodes: usize,
    pub buckets: usize,
    pub max_depth: usize,
    pub goal_nodes: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub horizon: usize,
    pub controls: Vec<ControlInput>,
    /// Determinants of the scope blocks at the end of the plan, in scope order.
    pub achieved_dets: Vec<f64>,
    pub feasible: bool,
    pub stats: TreeStats,
}

/// Tree under construction for one robot.
pub struct Planner<'a> {
    ctx: PlanningContext<'a>,
    params: PlannerParams,
    tree: PlanTree,
    // predicted scope means, indexed by node time
    means: Vec<Vec<Point2<f64>>>,
    goals: Vec<NodeId>,
    cache: GeodesicCache,
    iterations: usize,
}

impl<'a> Planner<'a> {
    pub fn new(root_pose: Pose, ctx: PlanningContext<'a>, params: PlannerParams) -> Result<Self> {
        if ctx.scope.is_empty() {
            return Err(AiaError::NoTargetsInScope);
        }
        if !ctx.workspace.is_free(&root_pose.position()) {
            return Err(AiaError::RootInCollision);
        }
        let means = vec![ctx.scope.iter().map(|s| s.belief.mean).collect::<Vec<_>>()];
        let cov_blocks: Vec<Matrix2<f64>> = ctx.scope.iter().map(|s| s.belief.cov).collect();
        let assignment =
            assign_targets(&[None], &[root_pose.position()], &cov_blocks, &means[0], params.delta)?[0];
        let mut planner = Planner {
            ctx,
            params,
            tree: PlanTree::new(),
            means,
            goals: Vec::new(),
            cache: GeodesicCache::new(),
            iterations: 0,
        };
        let root = TreeNode {
            pose: root_pose,
            cost: cov_blocks.iter().map(|c| c.determinant()).sum(),
            cov_blocks,
            time: 0,
            parent: None,
            control: None,
            assignment,
            pursued: assignment,
            bucket: 0,
        };
        let id = planner.tree.insert(root);
        if planner.is_goal(planner.tree.node(id)) {
            planner.goals.push(id);
        }
        Ok(planner)
    }

    pub fn tree(&self) -> &PlanTree {
        &self.tree
    }

    pub fn goal_nodes(&self) -> &[NodeId] {
        &self.goals
    }

    pub fn params(&self) -> &PlannerParams {
        &self.params
    }

    /// Predicted scope means at relative time `t`.
    pub fn predicted_means(&mut self, t: usize) -> Result<&[Point2<f64>]> {
        while self.means.len() <= t {
            let k = self.means.len() - 1;
            let next = self
                .ctx
                .scope
                .iter()
                .zip(&self.means[k])
                .map(|(s, m)| {
                    let b = LandmarkBelief::new(s.belief.landmark_id, *m, s.belief.cov);
                    predict_mean(&b, &s.dynamics, self.ctx.start_time + k)
                })
                .collect::<Result<Vec<_>>>()?;
            self.means.push(next);
        }
        Ok(&self.means[t])
    }

    fn is_goal(&self, node: &TreeNode) -> bool {
        let delta = self.params.delta;
        let all = || node.cov_blocks.iter().all(|c| c.determinant() <= delta);
        match self.params.goal_mode {
            GoalMode::AllOfScope => all(),
            GoalMode::OneOfScope => match node.pursued {
                Some(i) => node.cov_blocks[i].determinant() <= delta,
                None => all(),
            },
        }
    }

    pub fn sample_bucket<R: Rng + ?Sized>(&self, rng: &mut R) -> BucketId {
        sample_bucket(&self.tree, &self.params, rng)
    }

    /// Representative node of a bucket: its deepest member, lowest id on ties.
    pub fn representative(&self, bucket: BucketId) -> NodeId {
        let nodes = &self.tree.bucket(bucket).nodes;
        let mut best = nodes[0];
        for &n in nodes {
            if self.tree.node(n).time > self.tree.node(best).time {
                best = n;
            }
        }
        best
    }

    pub fn sample_control<R: Rng + ?Sized>(&mut self, q_rand: NodeId, rng: &mut R) -> Result<usize> {
        let t = self.tree.node(q_rand).time + 1;
        self.predicted_means(t)?;
        let node = self.tree.node(q_rand);
        Ok(sample_control(
            node,
            &self.means[t],
            self.ctx.workspace,
            self.ctx.sensor,
            self.ctx.controls,
            self.ctx.dt,
            &self.params,
            &mut self.cache,
            rng,
        ))
    }

    /// Extends every node of `bucket` with control `u`. Returns the new node
    /// ids; empty when the successor collides or its bucket is full. A child is not created when
    /// its parent already has one at the successor configuration (it would
    /// be an identical state) or when the successor bucket already holds a
    /// node that dominates it.
    pub fn extend(&mut self, bucket: BucketId, u: usize) -> Result<Vec<NodeId>> {
        let from = self.tree.bucket(bucket).pose;
        let control = self.ctx.controls.get(u);
        let p_new = apply_motion(&from, &control, self.ctx.dt);
        if !self.ctx.workspace.segment_is_free(&from.position(), &p_new.position()) {
            return Ok(Vec::new());
        }
        let key = PoseKey::of(&p_new);
        let members = self.tree.bucket(bucket).nodes.clone();
        let mut created = Vec::new();
        for q in members {
            if self.tree.has_child_at(q, &key) {
                continue;
            }
            if self.tree.bucket_len(&key) >= self.params.bucket_capacity {
                break;
            }
            let t = self.tree.node(q).time + 1;
            self.predicted_means(t)?;
            let parent = self.tree.node(q);
            let mut cov_blocks = Vec::with_capacity(parent.cov_blocks.len());
            for (i, s) in self.ctx.scope.iter().enumerate() {
                let prior = if s.dynamics.is_static() {
                    parent.cov_blocks[i]
                } else {
                    s.dynamics.a * parent.cov_blocks[i] * s.dynamics.a.transpose() + s.dynamics.q
                };
                cov_blocks.push(measurement_update_cov(&prior, &self.means[t][i], &p_new, self.ctx.sensor)?);
            }
            let step_cost: f64 = cov_blocks.iter().map(|c| c.determinant()).sum();
            let cost = parent.cost + step_cost;
            if self.tree.is_dominated(&key, t, cost, &cov_blocks) {
                continue;
            }
            let assignment = assign_targets(
                &[parent.assignment],
                &[p_new.position()],
                &cov_blocks,
                &self.means[t],
                self.params.delta,
            )?[0];
            let node = TreeNode {
                pose: p_new,
                cov_blocks,
                time: t,
                cost,
                parent: Some(q),
                control: Some(u),
                assignment,
                pursued: parent.assignment,
                bucket: 0,
            };
            let goal = self.is_goal(&node);
            let id = self.tree.insert(node);
            if goal {
                self.goals.push(id);
            }
            created.push(id);
        }
        Ok(created)
    }

    /// One sample-and-extend iteration.
    pub fn iterate<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<NodeId>> {
        self.iterations += 1;
        let bucket = self.sample_bucket(rng);
        let q_rand = self.representative(bucket);
        let u = self.sample_control(q_rand, rng)?;
        self.extend(bucket, u)
    }

    pub fn stats(&self) -> TreeStats {
        TreeStats {
            nodes: self.tree.len(),
            buckets: self.tree.bucket_count(),
            max_depth: self.tree.max_depth(),
            goal_nodes: self.goals.len(),
            iterations: self.iterations,
        }
    }

    /// Runs the sample budget (or until the first goal, if configured).
    pub fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        while self.iterations < self.params.n_max {
            if self.params.stop_at_first_goal && !self.goals.is_empty() {
                break;
            }
            self.iterate(rng)?;
        }
        Ok(())
    }

    /// Cheapest goal node, else the node with the lowest terminal uncertainty.
    pub fn solution(&self) -> PlanResult {
        let cheapest_goal = self.goals.iter().copied().min_by(|&a, &b| {
            self.tree
                .node(a)
                .cost
                .total_cmp(&self.tree.node(b).cost)
                .then(a.cmp(&b))
        });
        let (node, feasible) = match cheapest_goal {
            Some(g) => (g, true),
            None => {
                let terminal = |n: &TreeNode| n.cov_blocks.iter().map(|c| c.determinant()).sum::<f64>();
                let best = (0..self.tree.len())
                    .min_by(|&a, &b| {
                        terminal(self.tree.node(a))
                            .total_cmp(&terminal(self.tree.node(b)))
                            .then(a.cmp(&b))
                    })
                    .expect("tree has a root");
                (best, false)
            }
        };
        let controls: Vec<ControlInput> = self
            .tree
            .controls_to(node)
            .into_iter()
            .map(|u| self.ctx.controls.get(u))
            .collect();
        PlanResult {
            horizon: controls.len(),
            controls,
            achieved_dets: self.tree.node(node).cov_blocks.iter().map(|c| c.determinant()).collect(),
            feasible,
            stats: self.stats(),
        }
    }
}

/// Builds a tree from `root_pose` and extracts a control sequence for the scope.
pub fn plan<R: Rng + ?Sized>(
    root_pose: Pose,
    ctx: PlanningContext<'_>,
    params: &PlannerParams,
    rng: &mut R,
) -> Result<PlanResult> {
    let mut planner = Planner::new(root_pose, ctx, params.clone())?;
    planner.run(rng)?;
    Ok(planner.solution())
}
