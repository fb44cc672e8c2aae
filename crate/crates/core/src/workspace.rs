//! Environment geometry: bounds, rectangular obstacles, unicycle motion,
//! Voronoi membership and obstacle-aware (geodesic) distances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{AiaError, Result};

/// Discrete step length in seconds.
pub const DEFAULT_DT: f64 = 1.0;

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Rect {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Liang-Barsky clip of the closed segment `a`-`b` against the closed rectangle.
    pub fn intersects_segment(&self, a: &Point2<f64>, b: &Point2<f64>) -> bool {
        let d = b - a;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        let checks = [
            (-d.x, a.x - self.x_min),
            (d.x, self.x_max - a.x),
            (-d.y, a.y - self.y_min),
            (d.y, self.y_max - a.y),
        ];
        for (p, q) in checks {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

#[derive(Debug)]
pub struct Workspace {
    width: f64,
    height: f64,
    obstacles: Vec<Rect>,
    grid_resolution: f64,
    grid: OnceLock<Grid>,
}

impl Clone for Workspace {
    fn clone(&self) -> Self {
        Workspace {
            width: self.width,
            height: self.height,
            obstacles: self.obstacles.clone(),
            grid_resolution: self.grid_resolution,
            grid: self.grid.clone(),
        }
    }
}

impl PartialEq for Workspace {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.obstacles == other.obstacles
            && self.grid_resolution == other.grid_resolution
    }
}

impl Workspace {
    pub fn new(width: f64, height: f64, obstacles: Vec<Rect>, grid_resolution: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0 && height.is_finite() && height > 0.0) {
            return Err(AiaError::InvalidWorkspace(format!(
                "bounds must be positive, got {width} x {height}"
            )));
        }
        if !(grid_resolution > 0.0 && grid_resolution <= width.min(height) / 4.0) {
            return Err(AiaError::InvalidWorkspace(format!(
                "grid resolution {grid_resolution} must lie in (0, min(width, height)/4]"
            )));
        }
        for (i, r) in obstacles.iter().enumerate() {
            let inside = r.x_min >= 0.0 && r.y_min >= 0.0 && r.x_max <= width && r.y_max <= height;
            if !inside || !(r.area() > 0.0) || r.x_max <= r.x_min || r.y_max <= r.y_min {
                return Err(AiaError::InvalidWorkspace(format!(
                    "obstacle {i} must have positive area and lie within bounds"
                )));
            }
        }
        Ok(Workspace {
            width,
            height,
            obstacles,
            grid_resolution,
            grid: OnceLock::new(),
        })
    }

    /// Obstacle-free rectangle with the default 0.1 m grid.
    pub fn empty(width: f64, height: f64) -> Result<Self> {
        Workspace::new(width, height, Vec::new(), 0.1)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.obstacles
    }

    pub fn grid_resolution(&self) -> f64 {
        self.grid_resolution
    }

    pub fn in_bounds(&self, p: &Point2<f64>) -> bool {
        p.x.is_finite()
            && p.y.is_finite()
            && p.x >= 0.0
            && p.x <= self.width
            && p.y >= 0.0
            && p.y <= self.height
    }

    /// Inside bounds and outside every (closed) obstacle.
    pub fn is_free(&self, p: &Point2<f64>) -> bool {
        self.in_bounds(p) && !self.obstacles.iter().any(|r| r.contains(p))
    }

    /// Line of sight: both endpoints free and no obstacle touches the segment.
    pub fn segment_is_free(&self, a: &Point2<f64>, b: &Point2<f64>) -> bool {
        self.is_free(a) && self.is_free(b) && !self.obstacles.iter().any(|r| r.intersects_segment(a, b))
    }

    pub(crate) fn grid(&self) -> &Grid {
        self.grid.get_or_init(|| Grid::build(self))
    }
}

/// Robot configuration. `theta` always lies in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Smallest absolute difference between two headings, in `[0, π]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// Motion primitive: linear speed (m/s) and turn rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

impl ControlInput {
    pub const STOP: ControlInput = ControlInput { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        ControlInput { v, omega }
    }
}

/// The finite admissible control set. Ordered with speed as the outer
/// index and turn rate as the inner index; that order is the tie-break order.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    controls: Vec<ControlInput>,
}

impl ControlSet {
    pub fn from_grid(speeds: &[f64], turn_rates: &[f64]) -> Self {
        let controls = speeds
            .iter()
            .flat_map(|&v| turn_rates.iter().map(move |&w| ControlInput::new(v, w)))
            .collect();
        ControlSet { controls }
    }

    /// Speeds {0, 0.1} m/s and turn rates {0, 5, ..., 355} deg/s.
    pub fn standard() -> Self {
        let turn_rates: Vec<f64> = (0..72).map(|k| (5.0 * k as f64).to_radians()).collect();
        ControlSet::from_grid(&[0.0, 0.1], &turn_rates)
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn get(&self, idx: usize) -> ControlInput {
        self.controls[idx]
    }

    pub fn as_slice(&self) -> &[ControlInput] {
        &self.controls
    }

    /// Index of the zero control if present, else of the slowest, least-turning one.
    pub fn stationary_index(&self) -> usize {
        self.controls
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (a.v.abs(), a.omega.abs())
                    .partial_cmp(&(b.v.abs(), b.omega.abs()))
                    .unwrap_or(Ordering::Equal)
            })
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Unicycle update; heading changes after the translation along the old heading.
pub fn apply_motion(p: &Pose, u: &ControlInput, dt: f64) -> Pose {
    debug_assert!(dt > 0.0);
    Pose::new(
        p.x + u.v * dt * p.theta.cos(),
        p.y + u.v * dt * p.theta.sin(),
        p.theta + u.omega * dt,
    )
}

/// Index of the robot closest to `point`; ties go to the lowest index.
pub fn voronoi_owner(point: &Point2<f64>, robots: &[Point2<f64>]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, r) in robots.iter().enumerate() {
        let d = (point - r).norm_squared();
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((j, d)),
        }
    }
    best.map(|(j, _)| j).ok_or(AiaError::NoRobots)
}

/// Obstacle-aware distance between two free points, `Ok(None)` when no path exists.
///
/// Points with line of sight get their Euclidean distance. Otherwise the
/// result is the 8-connected grid path between the nearest free cell centres
/// plus the two straight snapping legs, so it never drops below the
/// Euclidean distance.
pub fn geodesic_distance(ws: &Workspace, a: &Point2<f64>, b: &Point2<f64>) -> Result<Option<f64>> {
    if !ws.is_free(a) || !ws.is_free(b) {
        return Err(AiaError::QueryPointInObstacle);
    }
    if a == b {
        return Ok(Some(0.0));
    }
    if ws.segment_is_free(a, b) {
        return Ok(Some((b - a).norm()));
    }
    let field = DistanceField::new(ws, b)?;
    Ok(field.grid_route(ws, a))
}

/// Single-source grid distances towards a fixed target point, reusable across
/// many geodesic queries against the same target.
#[derive(Debug, Clone)]
pub struct DistanceField {
    target: Point2<f64>,
    target_cell: usize,
    dist: Vec<f64>,
}

impl DistanceField {
    pub fn new(ws: &Workspace, target: &Point2<f64>) -> Result<Self> {
        if !ws.is_free(target) {
            return Err(AiaError::QueryPointInObstacle);
        }
        let grid = ws.grid();
        let target_cell = grid
            .nearest_free_cell(target)
            .ok_or(AiaError::QueryPointInObstacle)?;
        let dist = grid.dijkstra(target_cell);
        Ok(DistanceField {
            target: *target,
            target_cell,
            dist,
        })
    }

    pub fn target(&self) -> Point2<f64> {
        self.target
    }

    /// Geodesic distance from `from` to the field's target; `None` if unreachable.
    /// Returns `None` as well for a `from` point that is not free.
    pub fn distance_from(&self, ws: &Workspace, from: &Point2<f64>) -> Option<f64> {
        if !ws.is_free(from) {
            return None;
        }
        if *from == self.target {
            return Some(0.0);
        }
        if ws.segment_is_free(from, &self.target) {
            return Some((self.target - from).norm());
        }
        self.grid_route(ws, from)
    }

    fn grid_route(&self, ws: &Workspace, from: &Point2<f64>) -> Option<f64> {
        let grid = ws.grid();
        let cell = grid.nearest_free_cell(from)?;
        let g = self.dist[cell];
        if !g.is_finite() {
            return None;
        }
        let leg_a = (grid.center(cell) - from).norm();
        let leg_b = (self.target - grid.center(self.target_cell)).norm();
        Some(leg_a + g + leg_b)
    }
}

/// Uniform occupancy grid; a cell is free when its centre is free.
#[derive(Debug, Clone)]
pub(crate) struct Grid {
    nx: usize,
    ny: usize,
    res: f64,
    width: f64,
    height: f64,
    free: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    cell: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Grid {
    fn build(ws: &Workspace) -> Grid {
        let res = ws.grid_resolution;
        let nx = ((ws.width / res) - 1e-9).ceil().max(1.0) as usize;
        let ny = ((ws.height / res) - 1e-9).ceil().max(1.0) as usize;
        let mut grid = Grid {
            nx,
            ny,
            res,
            width: ws.width,
            height: ws.height,
            free: vec![false; nx * ny],
        };
        for iy in 0..ny {
            for ix in 0..nx {
                let c = grid.center(iy * nx + ix);
                grid.free[iy * nx + ix] = ws.is_free(&c);
            }
        }
        grid
    }

    pub(crate) fn center(&self, cell: usize) -> Point2<f64> {
        let ix = cell % self.nx;
        let iy = cell / self.nx;
        Point2::new(
            ((ix as f64 + 0.5) * self.res).min(self.width),
            ((iy as f64 + 0.5) * self.res).min(self.height),
        )
    }

    fn containing(&self, p: &Point2<f64>) -> (usize, usize) {
        let ix = ((p.x / self.res).floor().max(0.0) as usize).min(self.nx - 1);
        let iy = ((p.y / self.res).floor().max(0.0) as usize).min(self.ny - 1);
        (ix, iy)
    }

    /// Free cell whose centre is nearest to `p`, searched in growing rings.
    pub(crate) fn nearest_free_cell(&self, p: &Point2<f64>) -> Option<usize> {
        let (cx, cy) = self.containing(p);
        let mut best: Option<(f64, usize)> = None;
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            // Any cell in this ring is at least (ring - 1) * res away.
            if let Some((bd, _)) = best {
                let lower = (ring as f64 - 1.0).max(0.0) * self.res;
                if lower > bd {
                    break;
                }
            }
            let x0 = cx as isize - ring as isize;
            let x1 = cx as isize + ring as isize;
            let y0 = cy as isize - ring as isize;
            let y1 = cy as isize + ring as isize;
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    let on_ring = iy == y0 || iy == y1 || ix == x0 || ix == x1;
                    if !on_ring || ix < 0 || iy < 0 || ix >= self.nx as isize || iy >= self.ny as isize {
                        continue;
                    }
                    let cell = iy as usize * self.nx + ix as usize;
                    if !self.free[cell] {
                        continue;
                    }
                    let d = (self.center(cell) - p).norm();
                    match best {
                        Some((bd, bc)) if d > bd || (d == bd && cell > bc) => {}
                        _ => best = Some((d, cell)),
                    }
                }
            }
        }
        best.map(|(_, c)| c)
    }

    fn dijkstra(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.free.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier {
            cost: 0.0,
            cell: source,
        });
        let diag = std::f64::consts::SQRT_2 * self.res;
        while let Some(Frontier { cost, cell }) = heap.pop() {
            if cost > dist[cell] {
                continue;
            }
            let ix = (cell % self.nx) as isize;
            let iy = (cell / self.nx) as isize;
            for dy in -1..=1_isize {
                for dx in -1..=1_isize {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let Some(next) = self.index(ix + dx, iy + dy) else {
                        continue;
                    };
                    if !self.free[next] {
                        continue;
                    }
                    let step = if dx != 0 && dy != 0 {
                        // no corner cutting
                        let side_a = self.index(ix + dx, iy).map(|c| self.free[c]).unwrap_or(false);
                        let side_b = self.index(ix, iy + dy).map(|c| self.free[c]).unwrap_or(false);
                        if !(side_a && side_b) {
                            continue;
                        }
                        diag
                    } else {
                        self.res
                    };
                    let nc = cost + step;
                    if nc < dist[next] {
                        dist[next] = nc;
                        heap.push(Frontier { cost: nc, cell: next });
                    }
                }
            }
        }
        dist
    }

    fn index(&self, ix: isize, iy: isize) -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= self.nx as isize || iy >= self.ny as isize {
            None
        } else {
            Some(iy as usize * self.nx + ix as usize)
        }
    }
}

/// Unit vector pointing along `heading`.
pub fn heading_vector(heading: f64) -> Vector2<f64> {
    Vector2::new(heading.cos(), heading.sin())
}
