//! Biased sampling densities over tree buckets and control inputs.

use std::collections::HashMap;

use nalgebra::Point2;
use rand::Rng;

use super::tree::{BucketId, PlanTree, TreeNode};
use super::PlannerParams;
use crate::estimation::SensorModel;
use crate::workspace::{angle_distance, apply_motion, ControlSet, DistanceField, Workspace};

/// Draws a bucket: with probability `p_v` one of the buckets touching the
/// deepest tree level, otherwise one of the rest (falling back to the
/// deepest ones when there are no others).
pub fn sample_bucket<R: Rng + ?Sized>(tree: &PlanTree, params: &PlannerParams, rng: &mut R) -> BucketId {
    debug_assert!(!tree.is_empty());
    let deepest = tree.deepest_buckets();
    let total = tree.bucket_count();
    let others = total - deepest.len();
    let pick_deep = rng.random::<f64>() < params.p_v;
    if pick_deep || others == 0 {
        return deepest[rng.random_range(0..deepest.len())];
    }
    if others * 4 >= total {
        loop {
            let b = rng.random_range(0..total);
            if !tree.is_deepest_bucket(b) {
                return b;
            }
        }
    }
    let rest: Vec<BucketId> = (0..total).filter(|&b| !tree.is_deepest_bucket(b)).collect();
    rest[rng.random_range(0..rest.len())]
}

/// Memoised geodesic distances towards a handful of target points.
#[derive(Debug, Default)]
pub struct GeodesicCache {
    fields: HashMap<(u64, u64), Option<DistanceField>>,
}

impl GeodesicCache {
    pub fn new() -> Self {
        GeodesicCache::default()
    }

    /// `None` when `from` is not free or no path exists.
    pub fn distance(&mut self, ws: &Workspace, from: &Point2<f64>, to: &Point2<f64>) -> Option<f64> {
        if !ws.is_free(from) {
            return None;
        }
        if !ws.is_free(to) {
            // target estimate inside an obstacle: fall back to straight-line
            return Some((to - from).norm());
        }
        if ws.segment_is_free(from, to) {
            return Some((to - from).norm());
        }
        let field = self
            .fields
            .entry((to.x.to_bits(), to.y.to_bits()))
            .or_insert_with(|| DistanceField::new(ws, to).ok());
        field.as_ref().and_then(|f| f.distance_from(ws, from))
    }
}

/// Control whose successor is geodesically closest to `target`.
///
/// Controls sharing a successor position tie on distance; those ties go to
/// the successor heading that points most directly at the target, then to
/// the lowest control index. Returns `None` when every successor collides or
/// cannot reach the target.
pub fn steering_control(
    from: &crate::workspace::Pose,
    target: &Point2<f64>,
    ws: &Workspace,
    controls: &ControlSet,
    dt: f64,
    cache: &mut GeodesicCache,
) -> Option<usize> {
    let mut best: Option<(f64, f64, usize)> = None;
    let mut last_position: Option<(Point2<f64>, Option<f64>)> = None;
    for (idx, u) in controls.as_slice().iter().enumerate() {
        let next = apply_motion(from, u, dt);
        let pos = next.position();
        let dist = match last_position {
            Some((p, d)) if p == pos => d,
            _ => {
                let d = if ws.segment_is_free(&from.position(), &pos) {
                    cache.distance(ws, &pos, target)
                } else {
                    None
                };
                last_position = Some((pos, d));
                d
            }
        };
        let Some(dist) = dist else { continue };
        let to_target = target - pos;
        let misalign = if to_target.norm() > 0.0 {
            angle_distance(next.theta, to_target.y.atan2(to_target.x))
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
    best.map(|(_, _, idx)| idx)
}

/// Draws a control index for extending from `q_rand`.
///
/// `predicted_targets[i]` is the predicted mean of scope landmark `i` one
/// step after `q_rand`. While the assigned target is beyond sensing range
/// the steering control gets mass `p_u + (1 - p_u)/|U|`; otherwise the draw
/// is uniform.
#[allow(clippy::too_many_arguments)]
pub fn sample_control<R: Rng + ?Sized>(
    q_rand: &TreeNode,
    predicted_targets: &[Point2<f64>],
    ws: &Workspace,
    sensor: &SensorModel,
    controls: &ControlSet,
    dt: f64,
    params: &PlannerParams,
    cache: &mut GeodesicCache,
    rng: &mut R,
) -> usize {
    let biased = q_rand.assignment.and_then(|i| {
        let target = predicted_targets[i];
        if (target - q_rand.pose.position()).norm() > sensor.range {
            Some(target)
        } else {
            None
        }
    });
    if let Some(target) = biased {
        if rng.random::<f64>() < params.p_u {
            if let Some(best) = steering_control(&q_rand.pose, &target, ws, controls, dt, cache) {
                return best;
            }
            // every successor blocked: uniform, extend will reject
        }
    }
    rng.random_range(0..controls.len())
}
