#![allow(dead_code)]

use aia_core::cli_io::scenario::{LandmarkSpec, RobotSpec, Scenario};
use aia_core::cli_io::parse_scenario;
use aia_core::estimation::{GlobalBelief, LandmarkBelief, SensorModel};
use aia_core::workspace::Pose;
use nalgebra::{Matrix2, Vector2};

pub const DELTA: f64 = 1.8e-6;

/// Empty 10×10 world with the given robots and (truth, prior mean) landmarks.
pub fn scenario(robots: &[(f64, f64, f64)], landmarks: &[((f64, f64), (f64, f64))], prior_var: f64) -> Scenario {
    let mut s = parse_scenario(r#"{"workspace": {"width": 10, "height": 10}, "robots": [{"x": 1, "y": 1}]}"#).unwrap();
    s.robots = robots
        .iter()
        .map(|&(x, y, h)| RobotSpec { x, y, heading_deg: h })
        .collect();
    s.landmarks = landmarks
        .iter()
        .map(|&(t, m)| LandmarkSpec {
            position: [t.0, t.1],
            prior_mean: Some([m.0, m.1]),
            prior_cov: [[prior_var, 0.0], [0.0, prior_var]],
            dynamics: None,
        })
        .collect();
    s
}

pub fn three_robots_five_landmarks() -> Scenario {
    scenario(
        &[(2.0, 2.0, 0.0), (5.0, 5.0, 60.0), (8.0, 2.0, 120.0)],
        &[
            ((2.5, 2.2), (2.6, 2.1)),
            ((3.0, 5.5), (2.8, 5.6)),
            ((5.2, 4.6), (5.1, 4.8)),
            ((7.5, 2.5), (7.7, 2.3)),
            ((8.0, 8.0), (8.1, 7.9)),
        ],
        0.04,
    )
}

/// Textbook EKF range update, written independently of the library.
pub fn reference_ekf(b: &LandmarkBelief, p: &Pose, y: f64, model: &SensorModel) -> LandmarkBelief {
    let diff = Vector2::new(b.mean.x - p.x, b.mean.y - p.y);
    let d = diff.norm();
    if d > model.range {
        return b.clone();
    }
    let h = (diff / d).transpose();
    let sigma = (model.noise_slope * d).max(model.noise_floor);
    let s = (h * b.cov * h.transpose())[(0, 0)] + sigma * sigma;
    let k = b.cov * h.transpose() / s;
    let mean = b.mean + k * (y - d);
    let cov = (Matrix2::identity() - k * h) * b.cov;
    LandmarkBelief::new(b.landmark_id, mean, (cov + cov.transpose()) * 0.5)
}

pub fn max_belief_gap(a: &GlobalBelief, b: &GlobalBelief) -> f64 {
    a.landmarks
        .iter()
        .zip(&b.landmarks)
        .map(|(x, y)| (x.mean - y.mean).abs().max().max((x.cov - y.cov).abs().max()))
        .fold(0.0, f64::max)
}
