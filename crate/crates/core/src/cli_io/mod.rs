//! Scenario files, trace output and parameter sweeps.

pub mod scenario;
pub mod sweep;
pub mod trace;

pub use scenario::{emit_scenario, parse_scenario, Scenario};
pub use sweep::{run_sweep, Axis, Deployment, SweepSpec, SweepTable};
pub use trace::{run_experiment, simulate, Experiment, Summary, Timings};
