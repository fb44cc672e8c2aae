//! Newline-delimited trace output for single runs.
//!
//! The trace holds one record per step and a trailing summary record. Both
//! are reproducible byte for byte under a fixed seed. Wall-clock timings go
//! to a sidecar file next to the trace.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::coordinator::{RunOutcome, TraceRecord};
use crate::error::Result;

/// Deterministic part of a run's outcome; the trace's last line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub summary: bool,
    pub horizon: usize,
    pub timed_out: bool,
    pub steps: usize,
    pub robots: usize,
    pub landmarks: usize,
    pub seed: u64,
    pub partition_violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Spread::default();
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Spread {
            mean,
            std: var.sqrt(),
            count,
        }
    }
}

/// Wall-clock measurements of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timings {
    /// Per planning call, in seconds.
    pub planning: Spread,
    /// Per assignment refresh, in seconds.
    pub voronoi: Spread,
    pub wall_clock_seconds: f64,
    /// `per_step[t][j]`: planning time of robot `j` at step `t`, if it planned.
    pub per_step: Vec<Vec<Option<f64>>>,
}

impl Timings {
    pub fn from_trace(trace: &[TraceRecord], wall_clock_seconds: f64) -> Self {
        let planning: Vec<f64> = trace.iter().flat_map(|r| r.planning_seconds.iter().flatten().copied()).collect();
        let voronoi: Vec<f64> = trace.iter().map(|r| r.voronoi_seconds).collect();
        Timings {
            planning: Spread::of(&planning),
            voronoi: Spread::of(&voronoi),
            wall_clock_seconds,
            per_step: trace.iter().map(|r| r.planning_seconds.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub summary: Summary,
    pub timings: Timings,
    pub outcome: RunOutcome,
}

/// Path of the timing sidecar for a trace file.
pub fn timings_path(trace: &Path) -> PathBuf {
    let mut name = trace.as_os_str().to_owned();
    name.push(".timings.json");
    PathBuf::from(name)
}

/// Runs the scenario and returns its outcome without writing anything.
pub fn simulate(scenario: &Scenario, seed: u64) -> Result<Experiment> {
    let started = Instant::now();
    let mut state = scenario.simulation(seed)?;
    let outcome = state.run()?;
    Ok(finish(scenario, seed, outcome, started))
}

fn finish(scenario: &Scenario, seed: u64, outcome: RunOutcome, started: Instant) -> Experiment {
    let summary = Summary {
        summary: true,
        horizon: outcome.horizon,
        timed_out: outcome.timed_out,
        steps: outcome.trace.len(),
        robots: scenario.robots.len(),
        landmarks: scenario.landmarks.len(),
        seed,
        partition_violations: outcome.partition_violations,
    };
    let timings = Timings::from_trace(&outcome.trace, started.elapsed().as_secs_f64());
    Experiment {
        summary,
        timings,
        outcome,
    }
}

/// Runs the scenario, streaming the trace to `out` and timings to the sidecar.
///
/// The output file is created before the simulation starts so an unwritable
/// path fails fast.
pub fn run_experiment(scenario: &Scenario, seed: u64, out: &Path) -> Result<Experiment> {
    let mut writer = BufWriter::new(File::create(out)?);
    let started = Instant::now();
    let mut state = scenario.simulation(seed)?;
    let mut write_error = None;
    let outcome = state.run_with(|record| {
        if write_error.is_none() {
            if let Err(e) = write_line(&mut writer, record) {
                write_error = Some(e);
            }
        }
    })?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let experiment = finish(scenario, seed, outcome, started);
    write_line(&mut writer, &experiment.summary)?;
    writer.flush()?;
    let sidecar = serde_json::to_string_pretty(&experiment.timings).expect("timings serialize");
    std::fs::write(timings_path(out), sidecar)?;
    Ok(experiment)
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")
}
