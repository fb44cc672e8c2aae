//! The distributed online loop: Voronoi task split, role switching,
//! re-planning, measurement collection and periodic belief fusion.

use std::collections::{BTreeSet, VecDeque};
use std::time::Instant;

use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{
    ekf_update, predict, propagate_truth, simulate_measurement, GlobalBelief, LandmarkBelief, LandmarkDynamics,
    SensorModel,
};
use crate::planner::{plan, GoalMode, PlanResult, PlannerParams, PlanningContext, ScopeLandmark};
use crate::workspace::{angle_distance, apply_motion, voronoi_owner, ControlInput, ControlSet, Pose, Workspace};

/// Number of quasi-random samples used to estimate Voronoi cell centroids.
pub const CENTROID_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Aia,
    Explore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Online,
    Offline,
}

/// All-to-all exchange every `period` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommModel {
    pub period: usize,
}

impl Default for CommModel {
    fn default() -> Self {
        CommModel { period: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: usize,
    pub robot: usize,
    pub landmark: usize,
    pub range: f64,
    /// Robot pose the reading was taken from.
    pub pose: Pose,
}

#[derive(Debug, Clone)]
pub struct RobotAgent {
    pub id: usize,
    pub pose: Pose,
    pub role: Role,
    pub plan_queue: VecDeque<ControlInput>,
    /// Steps since the current plan was computed.
    pub plan_age: usize,
    pub assigned_set: BTreeSet<usize>,
    /// Assigned set at the previous step; `None` before the first step.
    pub previous_set: Option<BTreeSet<usize>>,
    pub local_belief: GlobalBelief,
    pub measurement_buffer: Vec<Measurement>,
}

/// Static configuration of a simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub workspace: Workspace,
    pub sensor: SensorModel,
    pub controls: ControlSet,
    pub dt: f64,
    pub delta: f64,
    pub comm: CommModel,
    pub mode: Mode,
    pub planner: PlannerParams,
    pub step_cap: usize,
}

/// Ground truth and prior for one landmark.
#[derive(Debug, Clone)]
pub struct LandmarkSetup {
    pub truth: Point2<f64>,
    pub prior: LandmarkBelief,
    pub dynamics: LandmarkDynamics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub pose: [f64; 3],
    pub role: Role,
    pub assigned: Vec<usize>,
    pub control: [f64; 2],
    pub plan_age: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub det: f64,
    pub mean: [f64; 2],
}

/// What happened during one step. Timings are wall-clock and are kept out
/// of the serialized form so traces stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub robots: Vec<RobotRecord>,
    pub landmarks: Vec<LandmarkRecord>,
    pub fusion: bool,
    #[serde(skip)]
    pub planning_seconds: Vec<Option<f64>>,
    #[serde(skip)]
    pub voronoi_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    /// Steps taken until every landmark was localized (or the cap).
    pub horizon: usize,
    pub timed_out: bool,
    pub partition_violations: usize,
}

/// Unlocalized landmarks grouped by the Voronoi cell their estimated mean falls in.
pub fn compute_assigned_sets(robots: &[Point2<f64>], belief: &GlobalBelief, delta: f64) -> Result<Vec<BTreeSet<usize>>> {
    let mut sets = vec![BTreeSet::new(); robots.len()];
    for (i, b) in belief.landmarks.iter().enumerate() {
        if b.det() > delta {
            sets[voronoi_owner(&b.mean, robots)?].insert(i);
        }
    }
    Ok(sets)
}

/// Same as [`compute_assigned_sets`] but with landmark ownership fixed in advance.
pub fn assigned_sets_with_owners(owners: &[usize], n_robots: usize, belief: &GlobalBelief, delta: f64) -> Vec<BTreeSet<usize>> {
    let mut sets = vec![BTreeSet::new(); n_robots];
    for (i, b) in belief.landmarks.iter().enumerate() {
        if b.det() > delta {
            sets[owners[i]].insert(i);
        }
    }
    sets
}

/// Number of ways `sets` fails to be a partition of the unlocalized landmarks.
pub fn partition_violations(sets: &[BTreeSet<usize>], belief: &GlobalBelief, delta: f64) -> usize {
    let mut seen = vec![0usize; belief.len()];
    for s in sets {
        for &i in s {
            seen[i] += 1;
        }
    }
    belief
        .landmarks
        .iter()
        .enumerate()
        .filter(|(i, b)| {
            let expected = usize::from(b.det() > delta);
            seen[*i] != expected
        })
        .count()
}

/// Halton points (bases 2 and 3) inside the free workspace.
pub fn quasi_random_free_samples(ws: &Workspace, count: usize) -> Vec<Point2<f64>> {
    fn radical_inverse(mut i: usize, base: usize) -> f64 {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    }
    let mut out = Vec::with_capacity(count);
    let mut i = 1;
    while out.len() < count && i < count * 1000 {
        let p = Point2::new(radical_inverse(i, 2) * ws.width(), radical_inverse(i, 3) * ws.height());
        if ws.is_free(&p) {
            out.push(p);
        }
        i += 1;
    }
    out
}

/// Centroid-seeking coverage control for a robot with nothing assigned.
///
/// Picks the admissible control whose successor is closest to the estimated
/// centroid of the robot's Voronoi cell; equal distances go to the successor
/// heading facing the centroid, then to the lowest index. Colliding
/// successors are skipped; when every moving control collides the robot
/// holds still.
pub fn exploration_control(
    agent: usize,
    robots: &[Point2<f64>],
    pose: &Pose,
    ws: &Workspace,
    controls: &ControlSet,
    dt: f64,
    samples: &[Point2<f64>],
) -> ControlInput {
    let mut sum = Point2::origin().coords;
    let mut count = 0usize;
    for s in samples {
        if voronoi_owner(s, robots).ok() == Some(agent) {
            sum += s.coords;
            count += 1;
        }
    }
    if count == 0 {
        return ControlInput::STOP;
    }
    let centroid = Point2::from(sum / count as f64);
    let mut best: Option<(f64, f64, usize)> = None;
    let mut can_move = false;
    for (idx, u) in controls.as_slice().iter().enumerate() {
        let next = apply_motion(pose, u, dt);
        if !ws.segment_is_free(&pose.position(), &next.position()) {
            continue;
        }
        can_move |= next.position() != pose.position();
        let to_c = centroid - next.position();
        let dist = to_c.norm();
        let misalign = if dist > 0.0 {
            angle_distance(next.theta, to_c.y.atan2(to_c.x))
        } else {
            0.0
        };
        let better = match best {
            None => true,
            Some((bd, bm, _)) => dist < bd || (dist == bd && misalign < bm),
        };
        if better {
            best = Some((dist, misalign, idx));
        }
    }
    match best {
        Some((_, _, i)) if can_move => controls.get(i),
        _ => ControlInput::STOP,
    }
}

struct Decision {
    control: ControlInput,
    new_plan: Option<VecDeque<ControlInput>>,
    planning_seconds: Option<f64>,
}

pub struct SimulationState {
    pub config: SimConfig,
    pub t: usize,
    pub agents: Vec<RobotAgent>,
    pub truth: Vec<Point2<f64>>,
    pub dynamics: Vec<LandmarkDynamics>,
    /// Belief as of the last fusion event.
    pub fused_belief: GlobalBelief,
    pub rng: ChaCha8Rng,
    /// Measurements taken during the most recent step, in collection order.
    pub last_measurements: Vec<Measurement>,
    pub partition_violations: usize,
    // last step index folded into `fused_belief`
    fused_through: Option<usize>,
    frozen_owners: Option<Vec<usize>>,
    samples: Vec<Point2<f64>>,
}

impl SimulationState {
    pub fn new(config: SimConfig, robots: &[Pose], landmarks: &[LandmarkSetup], seed: u64) -> Result<Self> {
        let prior = GlobalBelief::new(
            landmarks
                .iter()
                .enumerate()
                .map(|(i, l)| LandmarkBelief::new(i, l.prior.mean, l.prior.cov))
                .collect(),
        );
        let agents = robots
            .iter()
            .enumerate()
            .map(|(id, p)| RobotAgent {
                id,
                pose: *p,
                role: Role::Explore,
                plan_queue: VecDeque::new(),
                plan_age: 0,
                assigned_set: BTreeSet::new(),
                previous_set: None,
                local_belief: prior.clone(),
                measurement_buffer: Vec::new(),
            })
            .collect();
        let samples = quasi_random_free_samples(&config.workspace, CENTROID_SAMPLES);
        let mut state = SimulationState {
            t: 0,
            agents,
            truth: landmarks.iter().map(|l| l.truth).collect(),
            dynamics: landmarks.iter().map(|l| l.dynamics.clone()).collect(),
            fused_belief: prior,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_measurements: Vec::new(),
            partition_violations: 0,
            fused_through: None,
            frozen_owners: None,
            samples,
            config,
        };
        if !state.agents.is_empty() {
            if state.config.mode == Mode::Offline {
                let positions = state.positions();
                let owners = state
                    .fused_belief
                    .landmarks
                    .iter()
                    .map(|b| voronoi_owner(&b.mean, &positions))
                    .collect::<Result<Vec<_>>>()?;
                state.frozen_owners = Some(owners);
            }
            state.refresh_assignments()?;
        }
        Ok(state)
    }

    pub fn positions(&self) -> Vec<Point2<f64>> {
        self.agents.iter().map(|a| a.pose.position()).collect()
    }

    /// True while some landmark is still above the threshold in the fused belief.
    pub fn unfinished(&self) -> bool {
        self.fused_belief.landmarks.iter().any(|b| b.det() > self.config.delta)
    }

    pub fn assigned_sets(&self) -> Vec<BTreeSet<usize>> {
        self.agents.iter().map(|a| a.assigned_set.clone()).collect()
    }

    fn refresh_assignments(&mut self) -> Result<f64> {
        let started = Instant::now();
        let sets = match &self.frozen_owners {
            Some(owners) => assigned_sets_with_owners(owners, self.agents.len(), &self.fused_belief, self.config.delta),
            None => compute_assigned_sets(&self.positions(), &self.fused_belief, self.config.delta)?,
        };
        let elapsed = started.elapsed().as_secs_f64();
        let violations = partition_violations(&sets, &self.fused_belief, self.config.delta);
        debug_assert_eq!(violations, 0);
        self.partition_violations += violations;
        for (agent, set) in self.agents.iter_mut().zip(sets) {
            agent.role = if set.is_empty() { Role::Explore } else { Role::Aia };
            agent.assigned_set = set;
        }
        Ok(elapsed)
    }

    fn decide(&self, agent: &RobotAgent, seed: u64) -> Result<Decision> {
        let cfg = &self.config;
        if agent.role == Role::Explore {
            let control = exploration_control(
                agent.id,
                &self.positions(),
                &agent.pose,
                &cfg.workspace,
                &cfg.controls,
                cfg.dt,
                &self.samples,
            );
            return Ok(Decision {
                control,
                new_plan: Some(VecDeque::new()),
                planning_seconds: None,
            });
        }
        let changed = agent.previous_set.as_ref() != Some(&agent.assigned_set);
        let replan = agent.plan_queue.is_empty() || (cfg.mode == Mode::Online && changed);
        if !replan {
            return Ok(Decision {
                control: agent.plan_queue[0],
                new_plan: None,
                planning_seconds: None,
            });
        }
        let started = Instant::now();
        let scope: Vec<ScopeLandmark> = agent
            .assigned_set
            .iter()
            .map(|&i| &agent.local_belief.landmarks[i])
            .filter(|b| b.det() > cfg.delta)
            .map(|b| ScopeLandmark {
                belief: b.clone(),
                dynamics: self.dynamics[b.landmark_id].clone(),
            })
            .collect();
        if scope.is_empty() {
            // everything here is localized locally; wait for the next exchange
            return Ok(Decision {
                control: ControlInput::STOP,
                new_plan: Some(VecDeque::new()),
                planning_seconds: None,
            });
        }
        let params = PlannerParams {
            delta: cfg.delta,
            goal_mode: match cfg.mode {
                Mode::Online => cfg.planner.goal_mode,
                Mode::Offline => GoalMode::AllOfScope,
            },
            ..cfg.planner.clone()
        };
        let ctx = PlanningContext {
            workspace: &cfg.workspace,
            sensor: &cfg.sensor,
            controls: &cfg.controls,
            scope: &scope,
            start_time: self.t,
            dt: cfg.dt,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let result: PlanResult = plan(agent.pose, ctx, &params, &mut rng)?;
        let queue: VecDeque<ControlInput> = result.controls.into_iter().collect();
        let control = queue.front().copied().unwrap_or(ControlInput::STOP);
        Ok(Decision {
            control,
            new_plan: Some(queue),
            planning_seconds: Some(started.elapsed().as_secs_f64()),
        })
    }

    /// Advances the simulation by one step.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let t = self.t;
        let seeds: Vec<u64> = (0..self.agents.len()).map(|_| self.rng.random()).collect();

        // Planning is independent per robot; results are committed in index order.
        let decisions: Vec<Decision> = {
            let this = &*self;
            this.agents
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(a, &s)| this.decide(a, s))
                .collect::<Result<Vec<_>>>()?
        };

        let mut robot_records = Vec::with_capacity(self.agents.len());
        let mut planning_seconds = Vec::with_capacity(self.agents.len());
        for (agent, decision) in self.agents.iter_mut().zip(decisions) {
            match decision.new_plan {
                Some(queue) => {
                    agent.plan_queue = queue;
                    agent.plan_age = 0;
                }
                None => agent.plan_age += 1,
            }
            agent.plan_queue.pop_front();
            let next = apply_motion(&agent.pose, &decision.control, self.config.dt);
            let applied = if self
                .config
                .workspace
                .segment_is_free(&agent.pose.position(), &next.position())
            {
                agent.pose = next;
                decision.control
            } else {
                agent.plan_queue.clear();
                ControlInput::STOP
            };
            planning_seconds.push(decision.planning_seconds);
            robot_records.push(RobotRecord {
                pose: [agent.pose.x, agent.pose.y, agent.pose.theta],
                role: agent.role,
                assigned: agent.assigned_set.iter().copied().collect(),
                control: [applied.v, applied.omega],
                plan_age: agent.plan_age,
            });
            agent.previous_set = Some(agent.assigned_set.clone());
        }

        // landmarks move, every belief predicts
        for i in 0..self.truth.len() {
            self.truth[i] = propagate_truth(&self.truth[i], i, &self.dynamics[i], t, &mut self.rng)?;
        }
        for agent in &mut self.agents {
            for (i, b) in agent.local_belief.landmarks.iter_mut().enumerate() {
                *b = predict(b, &self.dynamics[i], t)?;
            }
        }

        self.last_measurements.clear();
        for agent in &mut self.agents {
            for i in 0..self.truth.len() {
                if let Some(range) = simulate_measurement(&agent.pose, &self.truth[i], &self.config.sensor, &mut self.rng) {
                    let m = Measurement {
                        t,
                        robot: agent.id,
                        landmark: i,
                        range,
                        pose: agent.pose,
                    };
                    agent.local_belief.landmarks[i] =
                        ekf_update(&agent.local_belief.landmarks[i], &agent.pose, range, &self.config.sensor)?;
                    agent.measurement_buffer.push(m);
                    self.last_measurements.push(m);
                }
            }
        }

        let fusion = t.is_multiple_of(self.config.comm.period);
        if fusion {
            self.fuse()?;
        }
        let voronoi_seconds = if self.agents.is_empty() {
            0.0
        } else {
            self.refresh_assignments()?
        };
        self.t += 1;

        Ok(TraceRecord {
            t,
            robots: robot_records,
            landmarks: self
                .fused_belief
                .landmarks
                .iter()
                .map(|b| LandmarkRecord {
                    det: b.det(),
                    mean: [b.mean.x, b.mean.y],
                })
                .collect(),
            fusion,
            planning_seconds,
            voronoi_seconds,
        })
    }

    /// Replays every buffered measurement, in (step, robot) order, on top
    /// of the last fused belief and hands the result to every robot.
    fn fuse(&mut self) -> Result<()> {
        let mut pending: Vec<Measurement> = Vec::new();
        for agent in &mut self.agents {
            pending.append(&mut agent.measurement_buffer);
        }
        // stable: keeps landmark order within one robot's step
        pending.sort_by_key(|m| (m.t, m.robot));
        let first = self.fused_through.map_or(0, |f| f + 1);
        let mut cursor = 0;
        for step in first..=self.t {
            for (i, b) in self.fused_belief.landmarks.iter_mut().enumerate() {
                *b = predict(b, &self.dynamics[i], step)?;
            }
            while cursor < pending.len() && pending[cursor].t == step {
                let m = pending[cursor];
                let b = &self.fused_belief.landmarks[m.landmark];
                self.fused_belief.landmarks[m.landmark] = ekf_update(b, &m.pose, m.range, &self.config.sensor)?;
                cursor += 1;
            }
        }
        self.fused_through = Some(self.t);
        for agent in &mut self.agents {
            agent.local_belief = self.fused_belief.clone();
        }
        Ok(())
    }

    /// Steps until every landmark is localized or the step cap trips.
    pub fn run_with<F: FnMut(&TraceRecord)>(&mut self, mut observe: F) -> Result<RunOutcome> {
        let mut trace = Vec::new();
        while self.unfinished() && self.t < self.config.step_cap {
            let record = self.step()?;
            observe(&record);
            trace.push(record);
        }
        Ok(RunOutcome {
            horizon: self.t,
            timed_out: self.unfinished(),
            partition_violations: self.partition_violations,
            trace,
        })
    }

    pub fn run(&mut self) -> Result<RunOutcome> {
        self.run_with(|_| {})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;

    fn belief(means: &[(f64, f64)], det_scale: f64) -> GlobalBelief {
        GlobalBelief::new(
            means
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| LandmarkBelief::new(i, Point2::new(x, y), Matrix2::identity() * det_scale))
                .collect(),
        )
    }

    fn config(mode: Mode, period: usize) -> SimConfig {
        SimConfig {
            workspace: Workspace::empty(10.0, 10.0).unwrap(),
            sensor: SensorModel::default(),
            controls: ControlSet::standard(),
            dt: 1.0,
            delta: 1.8e-6,
            comm: CommModel { period },
            mode,
            planner: PlannerParams::default(),
            step_cap: 400,
        }
    }

    fn landmark(truth: (f64, f64), prior_mean: (f64, f64)) -> LandmarkSetup {
        LandmarkSetup {
            truth: Point2::new(truth.0, truth.1),
            prior: LandmarkBelief::new(0, Point2::new(prior_mean.0, prior_mean.1), Matrix2::identity() * 0.04),
            dynamics: LandmarkDynamics::stationary(),
        }
    }

    #[test]
    fn assigned_sets_follow_voronoi_cells() {
        let robots = [Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)];
        let b = belief(&[(1.0, 1.0), (9.0, 1.0)], 0.04);
        let sets = compute_assigned_sets(&robots, &b, 1.8e-6).unwrap();
        assert_eq!(sets[0], BTreeSet::from([0]));
        assert_eq!(sets[1], BTreeSet::from([1]));
        assert_eq!(partition_violations(&sets, &b, 1.8e-6), 0);

        let localized = belief(&[(1.0, 1.0), (9.0, 1.0)], 1e-4);
        let sets = compute_assigned_sets(&robots, &localized, 1.8e-6).unwrap();
        assert!(sets.iter().all(BTreeSet::is_empty));

        let single = compute_assigned_sets(&robots[..1], &b, 1.8e-6).unwrap();
        assert_eq!(single[0], BTreeSet::from([0, 1]));
    }

    #[test]
    fn partition_violations_are_counted() {
        let b = belief(&[(1.0, 1.0), (9.0, 1.0)], 0.04);
        let doubled = vec![BTreeSet::from([0, 1]), BTreeSet::from([1])];
        assert_eq!(partition_violations(&doubled, &b, 1.8e-6), 1);
        let missing = vec![BTreeSet::from([0]), BTreeSet::new()];
        assert_eq!(partition_violations(&missing, &b, 1.8e-6), 1);
    }

    #[test]
    fn exploration_heads_for_the_cell_centroid() {
        let ws = Workspace::empty(10.0, 10.0).unwrap();
        let controls = ControlSet::standard();
        let samples = quasi_random_free_samples(&ws, CENTROID_SAMPLES);
        let pose = Pose::new(0.5, 0.5, 0.0);
        let u = exploration_control(0, &[pose.position()], &pose, &ws, &controls, 1.0, &samples);
        // oracle: enumerate every primitive against the sample centroid
        let c = samples.iter().fold(Point2::origin().coords, |acc, s| acc + s.coords) / samples.len() as f64;
        let best = controls
            .as_slice()
            .iter()
            .map(|u| (apply_motion(&pose, u, 1.0).position() - Point2::from(c)).norm())
            .fold(f64::INFINITY, f64::min);
        let got = (apply_motion(&pose, &u, 1.0).position() - Point2::from(c)).norm();
        assert_eq!(got, best);
        assert!(u.v > 0.0);
        assert!((u.omega.to_degrees() - 45.0).abs() <= 5.0, "omega {}", u.omega.to_degrees());
    }

    #[test]
    fn exploration_at_the_centroid_does_not_drive() {
        let ws = Workspace::empty(10.0, 10.0).unwrap();
        let controls = ControlSet::standard();
        let samples = quasi_random_free_samples(&ws, CENTROID_SAMPLES);
        let c = samples.iter().fold(Point2::origin().coords, |acc, s| acc + s.coords) / samples.len() as f64;
        let pose = Pose::new(c.x, c.y, 0.0);
        let u = exploration_control(0, &[pose.position()], &pose, &ws, &controls, 1.0, &samples);
        assert_eq!(u.v, 0.0);
    }

    #[test]
    fn boxed_in_robot_stays_put() {
        let ws = Workspace::new(
            10.0,
            10.0,
            vec![
                crate::workspace::Rect::new(4.0, 4.0, 6.0, 4.95),
                crate::workspace::Rect::new(4.0, 5.05, 6.0, 6.0),
                crate::workspace::Rect::new(4.0, 4.95, 4.95, 5.05),
                crate::workspace::Rect::new(5.05, 4.95, 6.0, 5.05),
            ],
            0.1,
        )
        .unwrap();
        let controls = ControlSet::standard();
        let samples = quasi_random_free_samples(&ws, CENTROID_SAMPLES);
        let pose = Pose::new(5.0, 5.0, 0.0);
        let u = exploration_control(0, &[pose.position(), Point2::new(1.0, 1.0)], &pose, &ws, &controls, 1.0, &samples);
        assert_eq!(u, ControlInput::STOP);
    }

    #[test]
    fn nothing_to_do_means_zero_horizon() {
        let robots = [Pose::new(1.0, 1.0, 0.0)];
        let mut none = SimulationState::new(config(Mode::Online, 1), &robots, &[], 1).unwrap();
        let out = none.run().unwrap();
        assert_eq!(out.horizon, 0);
        assert!(out.trace.is_empty());

        let mut done = landmark((3.0, 3.0), (3.0, 3.0));
        done.prior.cov = Matrix2::identity() * 1e-4;
        let mut state = SimulationState::new(config(Mode::Online, 1), &robots, &[done], 1).unwrap();
        let out = state.run().unwrap();
        assert_eq!(out.horizon, 0);
        assert!(!out.timed_out);
    }

    fn three_by_five(period: usize, seed: u64) -> SimulationState {
        let robots = [Pose::new(2.0, 2.0, 0.0), Pose::new(5.0, 5.0, 1.0), Pose::new(8.0, 2.0, 2.0)];
        let lms = [
            landmark((2.5, 2.2), (2.6, 2.1)),
            landmark((3.0, 5.5), (2.8, 5.6)),
            landmark((5.2, 4.6), (5.1, 4.8)),
            landmark((7.5, 2.5), (7.7, 2.3)),
            landmark((8.0, 8.0), (8.1, 7.9)),
        ];
        SimulationState::new(config(Mode::Online, period), &robots, &lms, seed).unwrap()
    }

    #[test]
    fn every_step_fusion_keeps_local_beliefs_identical() {
        let mut state = three_by_five(1, 3);
        for _ in 0..30 {
            state.step().unwrap();
            for a in &state.agents {
                assert_eq!(a.local_belief, state.fused_belief);
                assert!(a.measurement_buffer.is_empty());
            }
        }
    }

    #[test]
    fn sparse_fusion_keeps_buffers_between_exchanges() {
        let mut state = three_by_five(5, 3);
        state.step().unwrap();
        assert!(state.agents.iter().all(|a| a.measurement_buffer.is_empty()));
        state.step().unwrap();
        assert!(state.agents.iter().any(|a| !a.measurement_buffer.is_empty()));
    }

    #[test]
    fn roles_match_assigned_sets() {
        let mut state = three_by_five(1, 9);
        for _ in 0..20 {
            let record = state.step().unwrap();
            for r in &record.robots {
                assert_eq!(r.role == Role::Aia, !r.assigned.is_empty());
            }
        }
        assert_eq!(state.partition_violations, 0);
    }

    #[test]
    fn runs_are_reproducible() {
        let a = three_by_five(2, 11).run().unwrap();
        let b = three_by_five(2, 11).run().unwrap();
        let text = |o: &RunOutcome| serde_json::to_string(&o.trace).unwrap();
        assert_eq!(text(&a), text(&b));
        assert_eq!(a.horizon, b.horizon);
    }

    #[test]
    fn adjacent_landmark_matches_scalar_filter() {
        // scalar oracle: directional variance 1/(1/σ0² + k/R) at the start
        // distance, until the equal-variance determinant drops under δ
        let r = (0.25f64 * 0.3).powi(2);
        let mut k = 0usize;
        while (1.0 / (1.0 / 0.04 + k as f64 / r)).powi(2) > 1.8e-6 {
            k += 1;
        }
        assert_eq!(k, 5);

        let mut horizons: Vec<usize> = (0..9)
            .map(|seed| {
                let robots = [Pose::new(5.0, 5.0, 0.0)];
                let lm = landmark((5.3, 5.0), (5.3, 5.0));
                let mut state = SimulationState::new(config(Mode::Online, 1), &robots, &[lm], seed).unwrap();
                let out = state.run().unwrap();
                assert!(!out.timed_out);
                out.horizon
            })
            .collect();
        horizons.sort();
        let median = horizons[horizons.len() / 2];
        assert!(
            (median as i64 - k as i64).abs() <= 3,
            "median horizon {median} vs oracle {k}: {horizons:?}"
        );
    }

    #[test]
    fn offline_mode_keeps_initial_owners() {
        let robots = [Pose::new(1.0, 1.0, 0.0), Pose::new(9.0, 9.0, 0.0)];
        let lms = [landmark((2.0, 2.0), (2.0, 2.0)), landmark((8.0, 8.0), (8.0, 8.0))];
        let mut state = SimulationState::new(config(Mode::Offline, 1), &robots, &lms, 2).unwrap();
        assert_eq!(state.agents[0].assigned_set, BTreeSet::from([0]));
        for _ in 0..5 {
            state.step().unwrap();
            for (j, a) in state.agents.iter().enumerate() {
                assert!(a.assigned_set.iter().all(|&i| i == j));
            }
        }
    }
}
