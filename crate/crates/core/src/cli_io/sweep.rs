//! Parameter sweeps over team size, landmark count, communication period
//! or planning mode.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{LandmarkSpec, RobotSpec, Scenario};
use super::trace::{simulate, Spread};
use crate::coordinator::Mode;
use crate::error::{AiaError, Result};
use crate::workspace::Workspace;

/// Margin kept between generated landmarks and the workspace boundary.
const LANDMARK_MARGIN: f64 = 0.5;
const CORNER_SPACING: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    N,
    M,
    T,
    Mode,
}

impl FromStr for Axis {
    type Err = AiaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(Axis::N),
            "m" => Ok(Axis::M),
            "t" => Ok(Axis::T),
            "mode" => Ok(Axis::Mode),
            _ => Err(AiaError::validation("axis", format!("unknown axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deployment {
    /// Robots packed together near the lower-left corner.
    Corner,
    /// Robots at the cell centers of a near-square grid over the workspace.
    Grid,
}

impl FromStr for Deployment {
    type Err = AiaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "corner" => Ok(Deployment::Corner),
            "grid" => Ok(Deployment::Grid),
            _ => Err(AiaError::validation("deployment", format!("unknown deployment `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
    /// Robot placement; `None` keeps the base scenario's robots unless the
    /// team size is swept, in which case the corner deployment is used.
    pub deployment: Option<Deployment>,
    /// Landmarks generated per instance when the axis is not `m`; defaults
    /// to the base scenario's count.
    #[serde(default)]
    pub landmarks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub runs: usize,
    pub horizons: Vec<usize>,
    pub timeouts: usize,
    pub errors: Vec<String>,
    pub horizon: Spread,
    pub horizon_median: f64,
    pub planning_seconds: Spread,
    pub voronoi_seconds: Spread,
    pub wall_clock_seconds: Spread,
    pub partition_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: Axis,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the instance generated for sweep seed `seed`.
pub fn instance_seed(base: u64, seed: u64) -> u64 {
    mix(mix(base) ^ seed)
}

/// Initial robot placement for a named deployment.
pub fn deploy(deployment: Deployment, n: usize, ws: &Workspace) -> Vec<RobotSpec> {
    match deployment {
        Deployment::Corner => {
            let per_row = (n as f64).sqrt().ceil().max(1.0) as usize;
            let mut out = Vec::with_capacity(n);
            let mut k = 0usize;
            while out.len() < n {
                let x = CORNER_SPACING * (1 + k % per_row) as f64;
                let y = CORNER_SPACING * (1 + k / per_row) as f64;
                k += 1;
                if ws.is_free(&nalgebra::Point2::new(x, y)) {
                    out.push(RobotSpec { x, y, heading_deg: 45.0 });
                }
                if k > 100 * n.max(1) {
                    break;
                }
            }
            out
        }
        Deployment::Grid => {
            let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
            let rows = n.div_ceil(cols).max(1);
            (0..n)
                .map(|k| {
                    let (c, r) = (k % cols, k / cols);
                    RobotSpec {
                        x: (c as f64 + 0.5) * ws.width() / cols as f64,
                        y: (r as f64 + 0.5) * ws.height() / rows as f64,
                        heading_deg: 0.0,
                    }
                })
                .collect()
        }
    }
}

/// Landmarks placed uniformly over the free workspace (inset by a margin),
/// with prior means drawn from the prior around the truth.
pub fn place_landmarks<R: Rng + ?Sized>(m: usize, ws: &Workspace, prior_cov: [[f64; 2]; 2], rng: &mut R) -> Vec<LandmarkSpec> {
    let cov = Matrix2::new(prior_cov[0][0], prior_cov[0][1], prior_cov[1][0], prior_cov[1][1]);
    let chol = cov.cholesky().map(|c| c.l()).unwrap_or_else(Matrix2::zeros);
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let x = rng.random_range(LANDMARK_MARGIN..ws.width() - LANDMARK_MARGIN);
        let y = rng.random_range(LANDMARK_MARGIN..ws.height() - LANDMARK_MARGIN);
        if !ws.is_free(&nalgebra::Point2::new(x, y)) {
            continue;
        }
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let offset = chol * z;
        out.push(LandmarkSpec {
            position: [x, y],
            prior_mean: Some([x + offset.x, y + offset.y]),
            prior_cov,
            dynamics: None,
        });
    }
    out
}

/// The scenario run for one sweep value and seed.
pub fn cell_scenario(base: &Scenario, spec: &SweepSpec, value: &str, seed: u64) -> Result<Scenario> {
    let mut s = base.clone();
    let ws = base.workspace()?;
    let parse = |v: &str| -> Result<usize> {
        v.trim()
            .parse()
            .map_err(|_| AiaError::validation("values", format!("`{v}` is not a count")))
    };
    let mut n = base.robots.len();
    let mut m = spec.landmarks.unwrap_or(base.landmarks.len());
    match spec.axis {
        Axis::N => n = parse(value)?,
        Axis::M => m = parse(value)?,
        Axis::T => s.comm_period = parse(value)?,
        Axis::Mode => {
            s.mode = match value.trim().to_ascii_lowercase().as_str() {
                "online" => Mode::Online,
                "offline" => Mode::Offline,
                _ => return Err(AiaError::validation("values", format!("unknown mode `{value}`"))),
            }
        }
    }
    let deployment = match (spec.deployment, spec.axis) {
        (Some(d), _) => Some(d),
        (None, Axis::N) => Some(Deployment::Corner),
        (None, _) => None,
    };
    if let Some(d) = deployment {
        s.robots = deploy(d, n, &ws);
    }
    let instance = instance_seed(base.seed, seed);
    let prior_cov = base
        .landmarks
        .first()
        .map(|l| l.prior_cov)
        .unwrap_or([[0.04, 0.0], [0.0, 0.04]]);
    let mut rng = ChaCha8Rng::seed_from_u64(instance);
    s.landmarks = place_landmarks(m, &ws, prior_cov, &mut rng);
    s.seed = instance;
    Ok(s)
}

fn median(values: &[usize]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    }
}

enum CellResult {
    Done {
        horizon: usize,
        timed_out: bool,
        planning: Vec<f64>,
        voronoi: f64,
        wall: f64,
        violations: usize,
    },
    Failed(String),
}

fn run_cell(base: &Scenario, spec: &SweepSpec, value: &str, seed: u64) -> CellResult {
    let attempt = || -> Result<CellResult> {
        let scenario = cell_scenario(base, spec, value, seed)?;
        let e = simulate(&scenario, scenario.seed)?;
        Ok(CellResult::Done {
            horizon: e.summary.horizon,
            timed_out: e.summary.timed_out,
            planning: e
                .outcome
                .trace
                .iter()
                .flat_map(|r| r.planning_seconds.iter().flatten().copied())
                .collect(),
            voronoi: e.timings.voronoi.mean,
            wall: e.timings.wall_clock_seconds,
            violations: e.summary.partition_violations,
        })
    };
    attempt().unwrap_or_else(|e| CellResult::Failed(format!("seed {seed}: {e}")))
}

/// Runs every (value, seed) cell, in parallel, and tabulates the horizons.
/// A failing cell is recorded in its row and the sweep carries on.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec) -> SweepTable {
    let cells: Vec<(usize, u64)> = (0..spec.values.len())
        .flat_map(|v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(v, s)| run_cell(base, spec, &spec.values[v], s))
        .collect();

    let mut rows = Vec::with_capacity(spec.values.len());
    for (v, value) in spec.values.iter().enumerate() {
        let mut horizons = Vec::new();
        let mut errors = Vec::new();
        let mut timeouts = 0;
        let mut planning = Vec::new();
        let mut voronoi = Vec::new();
        let mut wall = Vec::new();
        let mut violations = 0;
        for (cell, result) in cells.iter().zip(&results) {
            if cell.0 != v {
                continue;
            }
            match result {
                CellResult::Done {
                    horizon,
                    timed_out,
                    planning: p,
                    voronoi: vo,
                    wall: w,
                    violations: pv,
                } => {
                    horizons.push(*horizon);
                    timeouts += usize::from(*timed_out);
                    planning.extend_from_slice(p);
                    voronoi.push(*vo);
                    wall.push(*w);
                    violations += pv;
                }
                CellResult::Failed(msg) => errors.push(msg.clone()),
            }
        }
        let as_f64: Vec<f64> = horizons.iter().map(|&h| h as f64).collect();
        rows.push(SweepRow {
            value: value.clone(),
            runs: spec.seeds.len(),
            horizon: Spread::of(&as_f64),
            horizon_median: median(&horizons),
            horizons,
            timeouts,
            errors,
            planning_seconds: Spread::of(&planning),
            voronoi_seconds: Spread::of(&voronoi),
            wall_clock_seconds: Spread::of(&wall),
            partition_violations: violations,
        });
    }
    SweepTable {
        axis: spec.axis,
        seeds: spec.seeds.clone(),
        rows,
    }
}

impl SweepTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep table serializes")
    }

    /// Column-aligned text rendering.
    pub fn to_text(&self) -> String {
        let header = ["value", "runs", "F mean", "F std", "F median", "timeouts", "errors", "T_plan (s)", "T_vor (s)"];
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
        for r in &self.rows {
            lines.push(vec![
                r.value.clone(),
                r.runs.to_string(),
                format!("{:.1}", r.horizon.mean),
                format!("{:.1}", r.horizon.std),
                format!("{:.1}", r.horizon_median),
                r.timeouts.to_string(),
                r.errors.len().to_string(),
                format!("{:.2e}", r.planning_seconds.mean),
                format!("{:.2e}", r.voronoi_seconds.mean),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &lines {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
