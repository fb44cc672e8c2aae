use std::collections::BTreeSet;

use nalgebra::{Matrix2, Point2};

use crate::error::{AiaError, Result};

/// On-the-fly target assignment for the robots of a tree node.
///
/// `parent[j]` is the target (an index into `cov_blocks`/`target_means`)
/// held by robot `j` in the parent node; `None` means unassigned, which is
/// treated like a robot that needs a new target. Robots whose target is
/// satisfied or shared with another robot greedily take the closest target
/// still available, in robot-index order.
pub fn assign_targets(
    parent: &[Option<usize>],
    robot_positions: &[Point2<f64>],
    cov_blocks: &[Matrix2<f64>],
    target_means: &[Point2<f64>],
    delta: f64,
) -> Result<Vec<Option<usize>>> {
    if cov_blocks.is_empty() {
        return Err(AiaError::NoTargetsInScope);
    }
    debug_assert_eq!(parent.len(), robot_positions.len());
    debug_assert_eq!(cov_blocks.len(), target_means.len());

    let mut assignment = parent.to_vec();
    let satisfied: Vec<bool> = cov_blocks.iter().map(|c| c.determinant() <= delta).collect();
    let unsatisfied: BTreeSet<usize> = (0..cov_blocks.len()).filter(|&i| !satisfied[i]).collect();
    if unsatisfied.is_empty() {
        // nothing left to pursue; keep the inherited assignment
        return Ok(assignment);
    }

    let candidates: Vec<usize> = (0..assignment.len())
        .filter(|&j| match assignment[j] {
            None => true,
            Some(i) => satisfied[i] || assignment.iter().filter(|s| **s == Some(i)).count() > 1,
        })
        .collect();

    let assigned: BTreeSet<usize> = assignment.iter().flatten().copied().collect();
    let mut to_assign: BTreeSet<usize> = (0..cov_blocks.len())
        .filter(|i| !assigned.contains(i) && !satisfied[*i])
        .collect();
    if to_assign.is_empty() {
        to_assign = unsatisfied.clone();
    }

    for j in candidates {
        let here = robot_positions[j];
        let closest = to_assign
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let da = (target_means[a] - here).norm_squared();
                let db = (target_means[b] - here).norm_squared();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("target pool is never empty here");
        assignment[j] = Some(closest);
        to_assign.remove(&closest);
        if to_assign.is_empty() {
            to_assign = unsatisfied.clone();
        }
    }
    Ok(assignment)
}
