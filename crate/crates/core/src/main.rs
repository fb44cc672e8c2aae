use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use aia_core::cli_io::{parse_scenario, run_experiment, run_sweep, simulate, Axis, Deployment, Scenario, SweepSpec};
use aia_core::planner::{GoalMode, Planner, PlanningContext, ScopeLandmark};
use aia_core::AiaError;

#[derive(Parser)]
#[command(name = "aia", version, about = "Multi-robot active information acquisition simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Trace file; the summary is printed either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario across values of one parameter and several seeds.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values, e.g. `2,5,10` or `online,offline`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Comma-separated seeds, or a half-open range like `0..10`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        deployment: Option<Deployment>,
        /// Landmarks per generated instance (default: as many as the scenario lists).
        #[arg(long)]
        landmarks: Option<usize>,
        /// Where to write the JSON table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build robot J's first planning tree and print its statistics.
    TreeDebug {
        scenario: PathBuf,
        #[arg(long)]
        robot: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, AiaError> {
    let bad = || AiaError::Validation {
        field: "seeds".into(),
        message: format!("cannot read `{text}`"),
    };
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn load(path: &PathBuf) -> Result<Scenario, AiaError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

fn run(cli: Cli) -> Result<ExitCode, AiaError> {
    match cli.command {
        Command::Run { scenario, seed, out } => {
            let s = load(&scenario)?;
            let seed = seed.unwrap_or(s.seed);
            let experiment = match &out {
                Some(path) => run_experiment(&s, seed, path)?,
                None => simulate(&s, seed)?,
            };
            let report = json!({
                "summary": experiment.summary,
                "timings": {
                    "planning": experiment.timings.planning,
                    "voronoi": experiment.timings.voronoi,
                    "wall_clock_seconds": experiment.timings.wall_clock_seconds,
                },
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(if experiment.summary.timed_out {
                eprintln!("step cap reached before every landmark was localized");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            seeds,
            deployment,
            landmarks,
            out,
        } => {
            let s = load(&scenario)?;
            let spec = SweepSpec {
                axis,
                values,
                seeds: parse_seeds(&seeds)?,
                deployment,
                landmarks,
            };
            let table = run_sweep(&s, &spec);
            print!("{}", table.to_text());
            if let Some(path) = out {
                std::fs::write(path, table.to_json())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::TreeDebug { scenario, robot, seed } => {
            let s = load(&scenario)?;
            let state = s.simulation(seed.unwrap_or(s.seed))?;
            let agent = state.agents.get(robot).ok_or_else(|| AiaError::Validation {
                field: "robot".into(),
                message: format!("scenario has {} robots", state.agents.len()),
            })?;
            let cfg = &state.config;
            let scope: Vec<ScopeLandmark> = agent
                .assigned_set
                .iter()
                .map(|&i| ScopeLandmark {
                    belief: agent.local_belief.landmarks[i].clone(),
                    dynamics: state.dynamics[i].clone(),
                })
                .collect();
            if scope.is_empty() {
                println!("{}", json!({ "robot": robot, "role": "explore", "scope": [] }));
                return Ok(ExitCode::SUCCESS);
            }
            let mut params = cfg.planner.clone();
            if cfg.mode == aia_core::coordinator::Mode::Offline {
                params.goal_mode = GoalMode::AllOfScope;
            }
            let ctx = PlanningContext {
                workspace: &cfg.workspace,
                sensor: &cfg.sensor,
                controls: &cfg.controls,
                scope: &scope,
                start_time: 0,
                dt: cfg.dt,
            };
            let mut planner = Planner::new(agent.pose, ctx, params)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(s.seed));
            planner.run(&mut rng)?;
            let result = planner.solution();
            let report = json!({
                "robot": robot,
                "scope": agent.assigned_set,
                "nodes": result.stats.nodes,
                "buckets": result.stats.buckets,
                "max_depth": result.stats.max_depth,
                "goal_nodes": result.stats.goal_nodes,
                "iterations": result.stats.iterations,
                "feasible": result.feasible,
                "horizon": result.horizon,
                "achieved_dets": result.achieved_dets,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
