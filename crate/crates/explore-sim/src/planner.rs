//! 8-connected A* over free cells with obstacle inflation, plus greedy
//! line-of-sight path smoothing.

use crate::geom::Point;
use crate::mapping::{CellState, OccupancyGrid};
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no path from ({0:.2}, {1:.2}) to ({2:.2}, {3:.2})")]
    NoPath(f64, f64, f64, f64),
    #[error("start cell is not traversable")]
    BadStart,
}

/// Integer edge costs: 10 per straight step, 14 per diagonal. Integer costs
/// make optimal path cost exactly comparable against an oracle.
pub const STRAIGHT: u64 = 10;
pub const DIAGONAL: u64 = 14;

pub struct Traversability {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl Traversability {
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }
}

/// Free cells minus cells within `robot_radius` of any occupied cell.
pub fn traversable_cells(grid: &OccupancyGrid, robot_radius: f64) -> Traversability {
    let (w, h) = (grid.width, grid.height);
    let r_cells = robot_radius / grid.resolution;
    let reach = r_cells.ceil() as i64;
    let mut cells = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            cells[y * w + x] = grid.state(x, y) == CellState::Free;
        }
    }
    if reach > 0 {
        let mut inflated = cells.clone();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                if grid.state(x as usize, y as usize) != CellState::Occupied {
                    continue;
                }
                for dy in -reach..=reach {
                    for dx in -reach..=reach {
                        if ((dx * dx + dy * dy) as f64).sqrt() > r_cells {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                            inflated[ny as usize * w + nx as usize] = false;
                        }
                    }
                }
            }
        }
        cells = inflated;
    }
    Traversability { width: w, height: h, cells }
}

const MOVES: [(i64, i64, u64); 8] = [
    (1, 0, STRAIGHT),
    (-1, 0, STRAIGHT),
    (0, 1, STRAIGHT),
    (0, -1, STRAIGHT),
    (1, 1, DIAGONAL),
    (1, -1, DIAGONAL),
    (-1, 1, DIAGONAL),
    (-1, -1, DIAGONAL),
];

fn octile(a: (usize, usize), b: (usize, usize)) -> u64 {
    let dx = (a.0 as i64 - b.0 as i64).unsigned_abs();
    let dy = (a.1 as i64 - b.1 as i64).unsigned_abs();
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    DIAGONAL * lo + STRAIGHT * (hi - lo)
}

#[derive(PartialEq, Eq)]
struct Node {
    f: u64,
    g: u64,
    idx: usize,
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on f, ties broken on g then index for determinism.
        other
            .f
            .cmp(&self.f)
            .then(other.g.cmp(&self.g))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Optimal 8-connected grid path. Returns the cell path (inclusive of both
/// endpoints) and its integer cost.
pub fn astar_grid(
    trav: &Traversability,
    start: (usize, usize),
    goal: (usize, usize),
) -> Option<(Vec<(usize, usize)>, u64)> {
    let w = trav.width;
    let h = trav.height;
    if !trav.at(start.0, start.1) || !trav.at(goal.0, goal.1) {
        return None;
    }
    let start_i = start.1 * w + start.0;
    let goal_i = goal.1 * w + goal.0;
    let mut dist = vec![u64::MAX; w * h];
    let mut prev = vec![usize::MAX; w * h];
    let mut heap = BinaryHeap::new();
    dist[start_i] = 0;
    heap.push(Node { f: octile(start, goal), g: 0, idx: start_i });
    while let Some(Node { g, idx, .. }) = heap.pop() {
        if g > dist[idx] {
            continue;
        }
        if idx == goal_i {
            let mut path = Vec::new();
            let mut cur = goal_i;
            while cur != usize::MAX {
                path.push((cur % w, cur / w));
                cur = prev[cur];
            }
            path.reverse();
            return Some((path, g));
        }
        let (x, y) = ((idx % w) as i64, (idx / w) as i64);
        for (dx, dy, cost) in MOVES {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            if !trav.at(nx as usize, ny as usize) {
                continue;
            }
            let ni = ny as usize * w + nx as usize;
            let ng = g + cost;
            if ng < dist[ni] {
                dist[ni] = ng;
                prev[ni] = idx;
                heap.push(Node {
                    f: ng + octile((nx as usize, ny as usize), goal),
                    g: ng,
                    idx: ni,
                });
            }
        }
    }
    None
}

/// Cells a segment passes through, by uniform supersampling at an eighth of
/// the resolution. Used for line-of-sight checks during smoothing.
pub fn segment_cells(grid: &OccupancyGrid, a: Point, b: Point) -> Vec<(usize, usize)> {
    let len = a.dist(b);
    let steps = ((len / (grid.resolution / 8.0)).ceil() as usize).max(1);
    let mut cells = Vec::new();
    let mut last = None;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let p = Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
        if let Some(c) = grid.world_to_cell(p) {
            if last != Some(c) {
                cells.push(c);
                last = Some(c);
            }
        }
    }
    cells
}

fn line_of_sight(grid: &OccupancyGrid, trav: &Traversability, a: Point, b: Point) -> bool {
    segment_cells(grid, a, b).iter().all(|(x, y)| trav.at(*x, *y))
}

/// Greedy shortcutting: from each waypoint jump to the furthest later
/// waypoint still in line of sight.
pub fn smooth_path(grid: &OccupancyGrid, trav: &Traversability, cells: &[(usize, usize)]) -> Vec<Point> {
    let pts: Vec<Point> = cells.iter().map(|(x, y)| grid.cell_center(*x, *y)).collect();
    if pts.len() <= 2 {
        return pts;
    }
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i + 1 < pts.len() {
        let mut j = pts.len() - 1;
        while j > i + 1 && !line_of_sight(grid, trav, pts[i], pts[j]) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out
}

/// Find the nearest traversable cell to `cell` within `max_radius` cells
/// (BFS over the full 8-neighborhood), for snapping endpoints.
pub fn snap_to_traversable(
    trav: &Traversability,
    cell: (usize, usize),
    max_radius: usize,
) -> Option<(usize, usize)> {
    if trav.at(cell.0, cell.1) {
        return Some(cell);
    }
    let (w, h) = (trav.width, trav.height);
    for r in 1..=max_radius as i64 {
        let mut best: Option<((usize, usize), i64)> = None;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx.abs() != r && dy.abs() != r {
                    continue;
                }
                let (nx, ny) = (cell.0 as i64 + dx, cell.1 as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                if trav.at(nx as usize, ny as usize) {
                    let d2 = dx * dx + dy * dy;
                    if best.map_or(true, |(_, bd)| d2 < bd) {
                        best = Some(((nx as usize, ny as usize), d2));
                    }
                }
            }
        }
        if let Some((c, _)) = best {
            return Some(c);
        }
    }
    None
}

/// A* on free cells with obstacle inflation, smoothed by line-of-sight
/// shortcutting. Waypoints are cell centers.
pub fn plan_path(
    grid: &OccupancyGrid,
    from: &crate::world::Pose,
    to: Point,
    robot_radius: f64,
) -> Result<Vec<Point>, PlanError> {
    let trav = traversable_cells(grid, robot_radius);
    let start_cell = grid
        .world_to_cell(from.position())
        .and_then(|c| snap_to_traversable(&trav, c, 4))
        .ok_or(PlanError::BadStart)?;
    let goal_cell = grid
        .world_to_cell(to)
        .and_then(|c| snap_to_traversable(&trav, c, 6))
        .ok_or(PlanError::NoPath(from.x, from.y, to.x, to.y))?;
    let (cells, _cost) = astar_grid(&trav, start_cell, goal_cell)
        .ok_or(PlanError::NoPath(from.x, from.y, to.x, to.y))?;
    Ok(smooth_path(grid, &trav, &cells))
}

pub fn path_length(path: &[Point]) -> f64 {
    path.windows(2).map(|w| w[0].dist(w[1])).sum()
}
