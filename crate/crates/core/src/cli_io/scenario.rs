//! JSON scenario files: schema, defaults, validation and conversion into
//! simulator inputs.
//!
//! Lengths are meters and angles are degrees in the file; they are
//! converted to radians only when runtime objects are built, so a parsed
//! scenario re-emits exactly what was read.

use nalgebra::{DVector, Matrix2, Matrix2xX, Point2};
use serde::{Deserialize, Serialize};

use crate::coordinator::{CommModel, LandmarkSetup, Mode, SimConfig, SimulationState};
use crate::error::{AiaError, Result};
use crate::estimation::{is_symmetric_psd, InputSequence, LandmarkBelief, LandmarkDynamics, SensorModel};
use crate::planner::{GoalMode, PlannerParams};
use crate::workspace::{ControlSet, Pose, Rect, Workspace};

const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub workspace: WorkspaceSpec,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub landmarks: Vec<LandmarkSpec>,
    #[serde(default)]
    pub sensor: SensorSpec,
    #[serde(default)]
    pub motion: MotionSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_one")]
    pub comm_period: usize,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_step_cap")]
    pub step_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceSpec {
    pub width: f64,
    pub height: f64,
    /// Axis-aligned rectangles as `[x_min, y_min, x_max, y_max]`.
    #[serde(default)]
    pub obstacles: Vec<[f64; 4]>,
    #[serde(default = "default_grid")]
    pub grid_resolution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkSpec {
    /// True position.
    pub position: [f64; 2],
    /// Defaults to the true position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_mean: Option<[f64; 2]>,
    /// Row-major; defaults to `0.04·I`.
    #[serde(default = "default_prior_cov")]
    pub prior_cov: [[f64; 2]; 2],
    /// Omitted for static landmarks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    #[serde(default = "identity")]
    pub a: [[f64; 2]; 2],
    /// Two rows of equal length `k`; empty when there are no inputs.
    #[serde(default)]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub q: [[f64; 2]; 2],
    #[serde(default)]
    pub inputs: InputsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputsSpec {
    Constant(Vec<f64>),
    Steps(Vec<Vec<f64>>),
}

impl Default for InputsSpec {
    fn default() -> Self {
        InputsSpec::Steps(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    #[serde(default = "default_range")]
    pub range: f64,
    #[serde(default = "default_slope")]
    pub noise_slope: f64,
    #[serde(default = "default_floor")]
    pub noise_floor: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        let d = SensorModel::default();
        SensorSpec {
            range: d.range,
            noise_slope: d.noise_slope,
            noise_floor: d.noise_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    #[serde(default = "default_speeds")]
    pub speeds: Vec<f64>,
    #[serde(default = "default_turn_rates")]
    pub turn_rates_deg: Vec<f64>,
    #[serde(default = "default_one_f64")]
    pub dt: f64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        MotionSpec {
            speeds: default_speeds(),
            turn_rates_deg: default_turn_rates(),
            dt: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSpec {
    #[serde(default = "default_p")]
    pub p_v: f64,
    #[serde(default = "default_p")]
    pub p_u: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub goal_mode: GoalMode,
    #[serde(default = "default_true")]
    pub stop_at_first_goal: bool,
    #[serde(default = "default_bucket_capacity")]
    pub bucket_capacity: usize,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        let d = PlannerParams::default();
        PlannerSpec {
            p_v: d.p_v,
            p_u: d.p_u,
            n_max: d.n_max,
            goal_mode: d.goal_mode,
            stop_at_first_goal: d.stop_at_first_goal,
            bucket_capacity: d.bucket_capacity,
        }
    }
}

fn default_delta() -> f64 {
    1.8e-6
}
fn default_one() -> usize {
    1
}
fn default_one_f64() -> f64 {
    1.0
}
fn default_step_cap() -> usize {
    5000
}
fn default_grid() -> f64 {
    0.1
}
fn default_prior_cov() -> [[f64; 2]; 2] {
    [[0.04, 0.0], [0.0, 0.04]]
}
fn identity() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}
fn default_range() -> f64 {
    SensorModel::default().range
}
fn default_slope() -> f64 {
    SensorModel::default().noise_slope
}
fn default_floor() -> f64 {
    SensorModel::default().noise_floor
}
fn default_speeds() -> Vec<f64> {
    vec![0.0, 0.1]
}
fn default_turn_rates() -> Vec<f64> {
    (0..72).map(|k| 5.0 * k as f64).collect()
}
fn default_p() -> f64 {
    0.9
}
fn default_n_max() -> usize {
    PlannerParams::default().n_max
}
fn default_true() -> bool {
    true
}
fn default_bucket_capacity() -> usize {
    PlannerParams::default().bucket_capacity
}

fn matrix(rows: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
}

fn point(p: &[f64; 2]) -> Point2<f64> {
    Point2::new(p[0], p[1])
}

fn finite(field: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AiaError::validation(field, "must be finite"))
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| AiaError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

/// Pretty-printed JSON that [`parse_scenario`] reads back unchanged.
pub fn emit_scenario(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serializes")
}

/// Everything needed to start a simulation.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub config: SimConfig,
    pub robots: Vec<Pose>,
    pub landmarks: Vec<LandmarkSetup>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }

    pub fn workspace(&self) -> Result<Workspace> {
        let w = &self.workspace;
        finite("workspace", &[w.width, w.height, w.grid_resolution])?;
        for (i, o) in w.obstacles.iter().enumerate() {
            finite(&format!("workspace.obstacles[{i}]"), o)?;
        }
        let obstacles = w.obstacles.iter().map(|o| Rect::new(o[0], o[1], o[2], o[3])).collect();
        Workspace::new(w.width, w.height, obstacles, w.grid_resolution).map_err(|e| match e {
            AiaError::InvalidWorkspace(m) => AiaError::validation("workspace", m),
            other => other,
        })
    }

    pub fn controls(&self) -> Result<ControlSet> {
        let m = &self.motion;
        if m.speeds.is_empty() {
            return Err(AiaError::validation("motion.speeds", "must not be empty"));
        }
        if m.turn_rates_deg.is_empty() {
            return Err(AiaError::validation("motion.turn_rates_deg", "must not be empty"));
        }
        finite("motion.speeds", &m.speeds)?;
        finite("motion.turn_rates_deg", &m.turn_rates_deg)?;
        let omegas: Vec<f64> = m.turn_rates_deg.iter().map(|d| d.to_radians()).collect();
        Ok(ControlSet::from_grid(&m.speeds, &omegas))
    }

    pub fn planner_params(&self) -> PlannerParams {
        let p = &self.planner;
        PlannerParams {
            p_v: p.p_v,
            p_u: p.p_u,
            n_max: p.n_max,
            goal_mode: p.goal_mode,
            delta: self.delta,
            stop_at_first_goal: p.stop_at_first_goal,
            bucket_capacity: p.bucket_capacity,
        }
    }

    pub fn build(&self) -> Result<BuiltScenario> {
        let workspace = self.workspace()?;
        let controls = self.controls()?;
        if !(self.motion.dt.is_finite() && self.motion.dt > 0.0) {
            return Err(AiaError::validation("motion.dt", "must be positive"));
        }
        let sensor = SensorModel {
            range: self.sensor.range,
            noise_slope: self.sensor.noise_slope,
            noise_floor: self.sensor.noise_floor,
        };
        sensor.validate()?;
        let planner = self.planner_params();
        planner.validate()?;
        if self.comm_period < 1 {
            return Err(AiaError::validation("comm_period", "must be at least 1"));
        }
        if self.step_cap < 1 {
            return Err(AiaError::validation("step_cap", "must be at least 1"));
        }
        if self.robots.is_empty() {
            return Err(AiaError::validation("robots", "at least one robot is required"));
        }

        let mut robots = Vec::with_capacity(self.robots.len());
        for (j, r) in self.robots.iter().enumerate() {
            let field = format!("robots[{j}]");
            finite(&field, &[r.x, r.y, r.heading_deg])?;
            let pose = Pose::new(r.x, r.y, r.heading_deg.to_radians());
            if !workspace.is_free(&pose.position()) {
                return Err(AiaError::validation(field, "pose is not in free space"));
            }
            robots.push(pose);
        }

        let mut landmarks = Vec::with_capacity(self.landmarks.len());
        for (i, l) in self.landmarks.iter().enumerate() {
            landmarks.push(self.landmark(i, l)?);
        }

        Ok(BuiltScenario {
            config: SimConfig {
                workspace,
                sensor,
                controls,
                dt: self.motion.dt,
                delta: self.delta,
                comm: CommModel {
                    period: self.comm_period,
                },
                mode: self.mode,
                planner,
                step_cap: self.step_cap,
            },
            robots,
            landmarks,
        })
    }

    fn landmark(&self, i: usize, l: &LandmarkSpec) -> Result<LandmarkSetup> {
        let field = |name: &str| format!("landmarks[{i}].{name}");
        finite(&field("position"), &l.position)?;
        let mean = l.prior_mean.unwrap_or(l.position);
        finite(&field("prior_mean"), &mean)?;
        finite(&field("prior_cov"), l.prior_cov.as_flattened())?;
        let cov = matrix(&l.prior_cov);
        if !is_symmetric_psd(&cov, PSD_TOL) {
            return Err(AiaError::validation(field("prior_cov"), "prior not PSD"));
        }
        let dynamics = match &l.dynamics {
            None => LandmarkDynamics::stationary(),
            Some(d) => dynamics(d, &field("dynamics"))?,
        };
        Ok(LandmarkSetup {
            truth: point(&l.position),
            prior: LandmarkBelief::new(i, point(&mean), cov),
            dynamics,
        })
    }

    /// A ready-to-run simulation seeded with `seed`.
    pub fn simulation(&self, seed: u64) -> Result<SimulationState> {
        let built = self.build()?;
        SimulationState::new(built.config, &built.robots, &built.landmarks, seed)
    }
}

fn dynamics(d: &DynamicsSpec, field: &str) -> Result<LandmarkDynamics> {
    finite(&format!("{field}.a"), d.a.as_flattened())?;
    finite(&format!("{field}.q"), d.q.as_flattened())?;
    let q = matrix(&d.q);
    if !is_symmetric_psd(&q, PSD_TOL) {
        return Err(AiaError::validation(format!("{field}.q"), "process noise not PSD"));
    }
    let k = match d.b.as_slice() {
        [] => 0,
        [r0, r1] if r0.len() == r1.len() => r0.len(),
        _ => return Err(AiaError::validation(format!("{field}.b"), "must have two rows of equal length")),
    };
    let mut b = Matrix2xX::zeros(k);
    for (r, row) in d.b.iter().enumerate() {
        finite(&format!("{field}.b"), row)?;
        for (c, v) in row.iter().enumerate() {
            b[(r, c)] = *v;
        }
    }
    let check = |v: &Vec<f64>| {
        if v.len() != k {
            return Err(AiaError::validation(
                format!("{field}.inputs"),
                format!("input length {} does not match {k} columns of b", v.len()),
            ));
        }
        finite(&format!("{field}.inputs"), v)
    };
    let inputs = match &d.inputs {
        InputsSpec::Constant(v) => {
            check(v)?;
            InputSequence::Constant(DVector::from_vec(v.clone()))
        }
        InputsSpec::Steps(steps) => {
            if k > 0 {
                steps.iter().try_for_each(check)?;
            }
            InputSequence::Steps(steps.iter().map(|v| DVector::from_vec(v.clone())).collect())
        }
    };
    Ok(LandmarkDynamics {
        a: matrix(&d.a),
        b,
        q,
        inputs,
    })
}
