mod common;

use std::collections::BTreeSet;

use aia_core::coordinator::{Role, SimulationState};
use aia_core::estimation::GlobalBelief;
use common::*;

fn unlocalized(b: &GlobalBelief) -> BTreeSet<usize> {
    b.landmarks.iter().enumerate().filter(|(_, l)| l.det() > DELTA).map(|(i, _)| i).collect()
}

#[test]
fn fused_belief_matches_a_central_filter() {
    let s = three_robots_five_landmarks();
    let mut state = s.simulation(21).unwrap();
    let sensor = state.config.sensor;
    let mut central = state.fused_belief.clone();
    for _ in 0..200 {
        state.step().unwrap();
        let mut batch = state.last_measurements.clone();
        batch.sort_by_key(|m| (m.t, m.robot));
        for m in batch {
            central.landmarks[m.landmark] = reference_ekf(&central.landmarks[m.landmark], &m.pose, m.range, &sensor);
        }
        assert!(max_belief_gap(&central, &state.fused_belief) <= 1e-9);
    }
}

#[test]
fn assignments_partition_the_open_landmarks() {
    let s = three_robots_five_landmarks();
    let mut state = s.simulation(5).unwrap();
    while state.unfinished() && state.t < 300 {
        let sets = state.assigned_sets();
        let mut union = BTreeSet::new();
        for set in &sets {
            for &i in set {
                assert!(union.insert(i), "landmark {i} assigned twice at t={}", state.t);
            }
        }
        assert_eq!(union, unlocalized(&state.fused_belief));
        for a in &state.agents {
            assert_eq!(a.role == Role::Aia, !a.assigned_set.is_empty());
        }
        state.step().unwrap();
    }
}

#[test]
fn robots_replan_only_on_change_or_exhaustion() {
    let s = three_robots_five_landmarks();
    let mut state: SimulationState = s.simulation(13).unwrap();
    while state.unfinished() && state.t < 300 {
        let expected: Vec<bool> = state
            .agents
            .iter()
            .map(|a| {
                a.role == Role::Aia
                    && (a.previous_set.as_ref() != Some(&a.assigned_set) || a.plan_queue.is_empty())
            })
            .collect();
        let record = state.step().unwrap();
        for (j, planned) in record.planning_seconds.iter().enumerate() {
            assert_eq!(planned.is_some(), expected[j], "robot {j} at t={}", record.t);
        }
    }
}

#[test]
fn finished_runs_are_below_threshold() {
    let s = three_robots_five_landmarks();
    let mut state = s.simulation(2).unwrap();
    let out = state.run().unwrap();
    assert!(!out.timed_out);
    assert_eq!(out.trace.len(), out.horizon);
    assert!(state.fused_belief.landmarks.iter().all(|b| b.det() <= DELTA));
    assert!(out.trace.windows(2).all(|w| w[1].t == w[0].t + 1));
}

#[test]
fn step_cap_flags_a_timeout() {
    let mut s = three_robots_five_landmarks();
    s.step_cap = 3;
    let out = s.simulation(2).unwrap().run().unwrap();
    assert!(out.timed_out);
    assert_eq!(out.horizon, 3);
    assert_eq!(out.trace.len(), 3);
}
