//! Occupancy grid maintenance from known-pose scans, image-map conversion,
//! synthetic 3D point accumulation, and map file exports.
//!
//! All map products share the occupancy grid's affine world<->cell transform,
//! so a world point indexes the same cell in every map.

use crate::geom::{Point, Rect};
use crate::world::{beam_offset, LidarScan, WorldSpec};
use std::collections::BTreeSet;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map export failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("point ({x:.3}, {y:.3}) outside grid extent")]
    OutOfExtent { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// Log-odds update parameters. Thresholds classify the ternary state; a cell
/// that has crossed a threshold once keeps its last known class even if the
/// log-odds later drifts back into the dead zone, so knowledge is monotone.
#[derive(Debug, Clone, Copy)]
pub struct LogOddsParams {
    pub hit: f64,
    pub miss: f64,
    pub clamp: f64,
    pub occupied_threshold: f64,
    pub free_threshold: f64,
}

impl Default for LogOddsParams {
    fn default() -> Self {
        LogOddsParams {
            hit: 0.85,
            miss: -0.4,
            clamp: 3.5,
            occupied_threshold: 0.5,
            free_threshold: -0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// World coordinates of the center of cell (0, 0).
    pub origin: Point,
    log_odds: Vec<f64>,
    states: Vec<CellState>,
    params: LogOddsParams,
    known_count: usize,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Point) -> Self {
        Self::with_params(width, height, resolution, origin, LogOddsParams::default())
    }

    pub fn with_params(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Point,
        params: LogOddsParams,
    ) -> Self {
        OccupancyGrid {
            width,
            height,
            resolution,
            origin,
            log_odds: vec![0.0; width * height],
            states: vec![CellState::Unknown; width * height],
            params,
            known_count: 0,
        }
    }

    /// Grid covering the world bounds at the given resolution.
    pub fn covering(bounds: Rect, resolution: f64) -> Self {
        let width = (bounds.width() / resolution).round() as usize;
        let height = (bounds.height() / resolution).round() as usize;
        let origin = Point::new(bounds.xmin + resolution / 2.0, bounds.ymin + resolution / 2.0);
        Self::new(width, height, resolution, origin)
    }

    pub fn world_to_cell(&self, p: Point) -> Option<(usize, usize)> {
        let cx = ((p.x - self.origin.x) / self.resolution).round();
        let cy = ((p.y - self.origin.y) / self.resolution).round();
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            None
        } else {
            Some((cx as usize, cy as usize))
        }
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> Point {
        Point::new(
            self.origin.x + cx as f64 * self.resolution,
            self.origin.y + cy as f64 * self.resolution,
        )
    }

    pub fn state(&self, cx: usize, cy: usize) -> CellState {
        self.states[cy * self.width + cx]
    }

    pub fn state_at(&self, p: Point) -> Option<CellState> {
        self.world_to_cell(p).map(|(cx, cy)| self.state(cx, cy))
    }

    pub fn known_count(&self) -> usize {
        self.known_count
    }

    fn apply(&mut self, cx: usize, cy: usize, delta: f64) {
        let i = cy * self.width + cx;
        let lo = (self.log_odds[i] + delta).clamp(-self.params.clamp, self.params.clamp);
        self.log_odds[i] = lo;
        let new_state = if lo > self.params.occupied_threshold {
            CellState::Occupied
        } else if lo < self.params.free_threshold {
            // Occupied is sticky: a grazing miss cannot reopen a wall cell.
            if self.states[i] == CellState::Occupied {
                CellState::Occupied
            } else {
                CellState::Free
            }
        } else {
            // Dead zone: keep last known class.
            self.states[i]
        };
        if self.states[i] == CellState::Unknown && new_state != CellState::Unknown {
            self.known_count += 1;
        }
        if new_state != CellState::Unknown {
            self.states[i] = new_state;
        }
    }

    /// Test-only direct state override; used to build synthetic grids.
    pub fn set_state(&mut self, cx: usize, cy: usize, state: CellState) {
        let i = cy * self.width + cx;
        if self.states[i] == CellState::Unknown && state != CellState::Unknown {
            self.known_count += 1;
        } else if self.states[i] != CellState::Unknown && state == CellState::Unknown {
            self.known_count -= 1;
        }
        self.states[i] = state;
        self.log_odds[i] = match state {
            CellState::Unknown => 0.0,
            CellState::Free => -self.params.clamp,
            CellState::Occupied => self.params.clamp,
        };
    }

    /// True if the cell is Free and 8-adjacent to at least one Unknown cell.
    pub fn is_frontier_cell(&self, cx: usize, cy: usize) -> bool {
        if self.state(cx, cy) != CellState::Free {
            return false;
        }
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let nx = cx as i64 + dx;
                let ny = cy as i64 + dy;
                if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
                    continue;
                }
                if self.state(nx as usize, ny as usize) == CellState::Unknown {
                    return true;
                }
            }
        }
        false
    }
}

/// Cells on the Bresenham line between two cell coordinates, inclusive.
pub fn bresenham(from: (i64, i64), to: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x0, mut y0) = from;
    let (x1, y1) = to;
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut cells = Vec::new();
    loop {
        cells.push((x0, y0));
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
    cells
}

/// Integrate a known-pose scan: free updates along each beam, an occupied
/// update at the hit cell when the beam hit something. Beams leaving the
/// grid are clipped.
pub fn integrate_scan(grid: &mut OccupancyGrid, scan: &LidarScan, lidar: &crate::world::LidarConfig) {
    let origin = scan.origin.position();
    if grid.world_to_cell(origin).is_none() {
        return;
    }
    let no_hit_eps = 1e-9;
    let step = grid.resolution * 0.5;
    for (i, &range) in scan.ranges.iter().enumerate() {
        let bearing = scan.origin.theta + beam_offset(lidar, i);
        let hit = range < lidar.range_max - no_hit_eps;
        let (dx, dy) = (bearing.cos(), bearing.sin());
        let end = Point::new(origin.x + dx * range, origin.y + dy * range);
        let end_cell = (
            ((end.x - grid.origin.x) / grid.resolution).round() as i64,
            ((end.y - grid.origin.y) / grid.resolution).round() as i64,
        );
        // Sample the beam at half-cell intervals so cells the ray crosses
        // obliquely (which a single 8-connected line trace can skip) still
        // receive free-updates; the hit cell alone gets the occupied-update.
        let mut prev = (i64::MIN, i64::MIN);
        let n_steps = (range / step).ceil() as usize;
        for s in 0..=n_steps {
            let d = (s as f64 * step).min(range);
            let p = Point::new(origin.x + dx * d, origin.y + dy * d);
            let cell = (
                ((p.x - grid.origin.x) / grid.resolution).round() as i64,
                ((p.y - grid.origin.y) / grid.resolution).round() as i64,
            );
            if cell == prev || cell == end_cell {
                continue;
            }
            prev = cell;
            if cell.0 < 0 || cell.1 < 0 || cell.0 >= grid.width as i64 || cell.1 >= grid.height as i64
            {
                break;
            }
            grid.apply(cell.0 as usize, cell.1 as usize, grid.params.miss);
        }
        if end_cell.0 >= 0
            && end_cell.1 >= 0
            && end_cell.0 < grid.width as i64
            && end_cell.1 < grid.height as i64
        {
            let update = if hit { grid.params.hit } else { grid.params.miss };
            grid.apply(end_cell.0 as usize, end_cell.1 as usize, update);
        }
    }
}

pub const GREY: u8 = 205;
pub const WHITE: u8 = 254;
pub const BLACK: u8 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageMap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl ImageMap {
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Occupancy grid to image map: Unknown -> grey, Free -> white,
/// Occupied -> black, traversing every cell.
pub fn grid_to_image(grid: &OccupancyGrid) -> ImageMap {
    let mut pixels = Vec::with_capacity(grid.width * grid.height);
    for cy in 0..grid.height {
        for cx in 0..grid.width {
            pixels.push(match grid.state(cx, cy) {
                CellState::Unknown => GREY,
                CellState::Free => WHITE,
                CellState::Occupied => BLACK,
            });
        }
    }
    ImageMap { width: grid.width, height: grid.height, pixels }
}

/// Synthetic 3D cloud accumulated from lidar hits at sampled wall heights.
#[derive(Debug, Clone)]
pub struct PointCloud3D {
    pub voxel_size: f64,
    pub wall_height: f64,
    pub height_samples: usize,
    voxels: BTreeSet<(i64, i64, i64)>,
}

impl PointCloud3D {
    pub fn new(voxel_size: f64) -> Self {
        PointCloud3D { voxel_size, wall_height: 2.0, height_samples: 8, voxels: BTreeSet::new() }
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Retained points: one per occupied voxel, at the voxel center.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.voxels.iter().map(move |(vx, vy, vz)| {
            (
                (*vx as f64 + 0.5) * self.voxel_size,
                (*vy as f64 + 0.5) * self.voxel_size,
                (*vz as f64 + 0.5) * self.voxel_size,
            )
        })
    }

    fn insert(&mut self, x: f64, y: f64, z: f64) {
        let key = (
            (x / self.voxel_size).floor() as i64,
            (y / self.voxel_size).floor() as i64,
            (z / self.voxel_size).floor() as i64,
        );
        self.voxels.insert(key);
    }
}

/// Accumulate wall-hit points from a scan into the cloud: each hitting beam
/// contributes points at its world (x, y) over sampled heights.
pub fn accumulate_points(
    cloud: &mut PointCloud3D,
    world: &WorldSpec,
    scan: &LidarScan,
) {
    let origin = scan.origin.position();
    for (i, &range) in scan.ranges.iter().enumerate() {
        if range >= world.lidar.range_max - 1e-9 {
            continue;
        }
        let bearing = scan.origin.theta + beam_offset(&world.lidar, i);
        let x = origin.x + bearing.cos() * range;
        let y = origin.y + bearing.sin() * range;
        for k in 0..cloud.height_samples {
            let z = cloud.wall_height * (k as f64 + 0.5) / cloud.height_samples as f64;
            cloud.insert(x, y, z);
        }
    }
}

/// Write a binary PGM. Row 0 of the file is the maximum-y grid row
/// (north-up image).
pub fn export_pgm(img: &ImageMap, path: &std::path::Path) -> Result<(), MapError> {
    let mut out = Vec::with_capacity(img.pixels.len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    for y in (0..img.height).rev() {
        out.extend_from_slice(&img.pixels[y * img.width..(y + 1) * img.width]);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse a binary PGM back into an ImageMap, classifying arbitrary gray
/// levels into the ternary classes.
pub fn import_pgm(path: &std::path::Path) -> Result<ImageMap, MapError> {
    let data = std::fs::read(path)?;
    let bad = |msg: &str| MapError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string()));
    let mut fields = Vec::new();
    let mut pos = 0;
    // P5, width, height, maxval, separated by whitespace (comments ignored).
    while fields.len() < 4 && pos < data.len() {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| bad("non-utf8 header"))?.to_string());
    }
    if fields.len() < 4 || fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    pos += 1; // single whitespace after maxval
    if data.len() < pos + width * height {
        return Err(bad("truncated pixel data"));
    }
    let mut pixels = vec![0u8; width * height];
    for file_row in 0..height {
        let y = height - 1 - file_row;
        for x in 0..width {
            let v = data[pos + file_row * width + x];
            pixels[y * width + x] = if v < 90 {
                BLACK
            } else if v < 210 {
                GREY
            } else {
                WHITE
            };
        }
    }
    Ok(ImageMap { width, height, pixels })
}

/// Write the cloud as ASCII XYZ lines sorted by (x, y, z).
pub fn export_xyz(cloud: &PointCloud3D, path: &std::path::Path) -> Result<(), MapError> {
    let mut out = String::new();
    for (x, y, z) in cloud.points() {
        out.push_str(&format!("{x:.6} {y:.6} {z:.6}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{LidarConfig, Pose};

    fn single_beam_lidar(range_max: f64) -> LidarConfig {
        LidarConfig { range_max, beam_count: 1, angular_span: 0.0 }
    }

    fn scan_one(origin: Pose, range: f64, t: f64) -> LidarScan {
        LidarScan { origin, ranges: vec![range], timestamp: t }
    }

    #[test]
    #[ignore]
    fn diag_single_room_coverage() {
        use crate::world::{raycast_scan, true_free_mask, SimClock, Wall, WorldSpec};
        let t = 0.2;
        let (w, h) = (6.0, 6.0);
        let world = WorldSpec {
            name: "box".into(),
            bounds: crate::geom::Rect::new(0.0, 0.0, w, h),
            walls: vec![
                Wall { x1: 0.0, y1: t / 2.0, x2: w, y2: t / 2.0, thickness: t },
                Wall { x1: 0.0, y1: h - t / 2.0, x2: w, y2: h - t / 2.0, thickness: t },
                Wall { x1: t / 2.0, y1: 0.0, x2: t / 2.0, y2: h, thickness: t },
                Wall { x1: w - t / 2.0, y1: 0.0, x2: w - t / 2.0, y2: h, thickness: t },
            ],
            rooms: vec![],
            spawn: Pose { x: 3.0, y: 3.0, theta: 0.0 },
            lidar: LidarConfig {
                range_max: 6.0,
                beam_count: 360,
                angular_span: std::f64::consts::TAU,
            },
        };
        let mask = true_free_mask(&world, 0.1);
        let mut grid = OccupancyGrid::covering(world.bounds, 0.1);
        let clock = SimClock::new(0.5);
        // Single scan from the center.
        let scan =
            raycast_scan(&world, &Pose { x: 3.0, y: 3.0, theta: 0.0 }, &clock).unwrap();
        integrate_scan(&mut grid, &scan, &world.lidar);
        let count_unknown = |grid: &OccupancyGrid| {
            let mut n = 0;
            for cy in 0..mask.height {
                for cx in 0..mask.width {
                    if mask.at(cx, cy) && grid.state(cx, cy) == CellState::Unknown {
                        n += 1;
                    }
                }
            }
            n
        };
        println!("after 1 center scan: unknown free cells = {}", count_unknown(&grid));
        // A short diagonal walk with a scan every half metre.
        for i in 0..8 {
            let p = Pose { x: 2.0 + 0.25 * i as f64, y: 2.0 + 0.25 * i as f64, theta: 0.0 };
            let scan = raycast_scan(&world, &p, &clock).unwrap();
            integrate_scan(&mut grid, &scan, &world.lidar);
        }
        let n = count_unknown(&grid);
        println!("after 9 scans: unknown free cells = {n}");
        let mut shown = 0;
        for cy in 0..mask.height {
            for cx in 0..mask.width {
                if mask.at(cx, cy) && grid.state(cx, cy) == CellState::Unknown && shown < 20 {
                    let p = grid.cell_center(cx, cy);
                    println!("  unknown at ({:.1},{:.1})", p.x, p.y);
                    shown += 1;
                }
            }
        }
    }

    #[test]
    fn integrate_single_beam_counts() {
        // Beam from cell center (0.05, 0.05) hitting at 2 m, resolution 0.1:
        // the Bresenham line covers 21 cells; 20 free + 1 occupied.
        let mut grid = OccupancyGrid::new(40, 40, 0.1, Point::new(0.05, 0.05));
        let lidar = single_beam_lidar(10.0);
        let scan = scan_one(Pose::new(0.05, 0.05, 0.0), 2.0, 0.0);
        integrate_scan(&mut grid, &scan, &lidar);
        let mut free = 0;
        let mut occ = 0;
        for cy in 0..grid.height {
            for cx in 0..grid.width {
                match grid.state(cx, cy) {
                    CellState::Free => free += 1,
                    CellState::Occupied => occ += 1,
                    CellState::Unknown => {}
                }
            }
        }
        assert_eq!(free, 20);
        assert_eq!(occ, 1);
        // Oracle: cell count on the Bresenham line.
        assert_eq!(bresenham((0, 0), (20, 0)).len(), 21);
    }

    #[test]
    fn integrate_no_hit_beam() {
        let mut grid = OccupancyGrid::new(40, 40, 0.1, Point::new(0.05, 0.05));
        let lidar = single_beam_lidar(2.0);
        let scan = scan_one(Pose::new(0.05, 0.05, 0.0), 2.0, 0.0);
        integrate_scan(&mut grid, &scan, &lidar);
        let occ = (0..grid.width * grid.height)
            .filter(|i| grid.state(i % grid.width, i / grid.width) == CellState::Occupied)
            .count();
        assert_eq!(occ, 0);
        assert_eq!(grid.state(10, 0), CellState::Free);
    }

    #[test]
    fn integrate_idempotent_ternary() {
        let lidar = single_beam_lidar(10.0);
        let scan = scan_one(Pose::new(0.05, 0.05, 0.3), 2.0, 0.0);
        let mut once = OccupancyGrid::new(40, 40, 0.1, Point::new(0.05, 0.05));
        integrate_scan(&mut once, &scan, &lidar);
        let mut twice = once.clone();
        integrate_scan(&mut twice, &scan, &lidar);
        for cy in 0..once.height {
            for cx in 0..once.width {
                assert_eq!(once.state(cx, cy), twice.state(cx, cy));
            }
        }
    }

    #[test]
    fn knowledge_monotone() {
        let mut grid = OccupancyGrid::new(40, 40, 0.1, Point::new(0.05, 0.05));
        let lidar = single_beam_lidar(10.0);
        let mut last = 0;
        for k in 0..8 {
            let scan = scan_one(Pose::new(0.05, 0.05, 0.2 * k as f64), 1.5, k as f64);
            integrate_scan(&mut grid, &scan, &lidar);
            assert!(grid.known_count() >= last);
            last = grid.known_count();
        }
    }

    #[test]
    fn image_map_classes() {
        let mut grid = OccupancyGrid::new(2, 2, 0.1, Point::new(0.0, 0.0));
        grid.set_state(0, 0, CellState::Unknown);
        grid.set_state(1, 0, CellState::Free);
        grid.set_state(0, 1, CellState::Occupied);
        grid.set_state(1, 1, CellState::Free);
        let img = grid_to_image(&grid);
        assert_eq!(img.pixels, vec![GREY, WHITE, BLACK, WHITE]);
    }

    #[test]
    fn image_histogram_matches_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut grid = OccupancyGrid::new(100, 100, 0.1, Point::new(0.0, 0.0));
        let mut counts = [0usize; 3];
        for cy in 0..100 {
            for cx in 0..100 {
                let s = match rng.gen_range(0..3) {
                    0 => CellState::Unknown,
                    1 => CellState::Free,
                    _ => CellState::Occupied,
                };
                counts[match s {
                    CellState::Unknown => 0,
                    CellState::Free => 1,
                    CellState::Occupied => 2,
                }] += 1;
                grid.set_state(cx, cy, s);
            }
        }
        let img = grid_to_image(&grid);
        let grey = img.pixels.iter().filter(|p| **p == GREY).count();
        let white = img.pixels.iter().filter(|p| **p == WHITE).count();
        let black = img.pixels.iter().filter(|p| **p == BLACK).count();
        assert_eq!([grey, white, black], [counts[0], counts[1], counts[2]]);
    }

    #[test]
    fn pgm_bytes_exact() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageMap { width: 2, height: 1, pixels: vec![WHITE, BLACK] };
        let p = dir.path().join("a.pgm");
        export_pgm(&img, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"P5\n2 1\n255\n\xfe\x00".to_vec());

        let img = ImageMap { width: 1, height: 1, pixels: vec![GREY] };
        let p2 = dir.path().join("b.pgm");
        export_pgm(&img, &p2).unwrap();
        assert_eq!(std::fs::read(&p2).unwrap(), b"P5\n1 1\n255\n\xcd".to_vec());
    }

    #[test]
    fn pgm_reexport_identical() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageMap { width: 3, height: 2, pixels: vec![WHITE, BLACK, GREY, WHITE, WHITE, BLACK] };
        let p1 = dir.path().join("a.pgm");
        let p2 = dir.path().join("b.pgm");
        export_pgm(&img, &p1).unwrap();
        export_pgm(&img, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn pgm_roundtrip_with_row_flip() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageMap { width: 2, height: 2, pixels: vec![WHITE, BLACK, GREY, WHITE] };
        let p = dir.path().join("rt.pgm");
        export_pgm(&img, &p).unwrap();
        let back = import_pgm(&p).unwrap();
        assert_eq!(back, img);
        // On disk, row 0 of the file is the max-y row.
        let raw = std::fs::read(&p).unwrap();
        let payload = &raw[raw.len() - 4..];
        assert_eq!(payload, &[GREY, WHITE, WHITE, BLACK]);
    }

    #[test]
    fn cloud_frame_identity_and_rotation() {
        let world_json = crate::bench::generate_world(1, crate::bench::SizeClass::Small);
        let mut lidar_world = world_json;
        lidar_world.lidar = LidarConfig { range_max: 10.0, beam_count: 1, angular_span: 0.0 };
        let mut cloud = PointCloud3D::new(0.05);
        cloud.height_samples = 3;
        let scan = scan_one(Pose::new(0.0, 0.0, 0.0), 3.0, 0.0);
        accumulate_points(&mut cloud, &lidar_world, &scan);
        assert_eq!(cloud.len(), 3);
        for (x, y, _z) in cloud.points() {
            assert!((x - 3.0).abs() < 0.05 && y.abs() < 0.05);
        }

        let mut cloud2 = PointCloud3D::new(0.05);
        let scan = scan_one(Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), 2.0, 0.0);
        accumulate_points(&mut cloud2, &lidar_world, &scan);
        for (x, y, _z) in cloud2.points() {
            assert!(x.abs() < 0.05 && (y - 2.0).abs() < 0.05);
        }
    }

    #[test]
    fn cloud_voxel_dedup() {
        let world = crate::bench::generate_world(1, crate::bench::SizeClass::Small);
        let mut w = world;
        w.lidar = LidarConfig { range_max: 10.0, beam_count: 1, angular_span: 0.0 };
        let mut cloud = PointCloud3D::new(0.05);
        let scan = scan_one(Pose::new(0.0, 0.0, 0.0), 3.0, 0.0);
        accumulate_points(&mut cloud, &w, &scan);
        let n = cloud.len();
        // Same hit observed from another pose maps to the same voxels.
        let scan2 = scan_one(Pose::new(1.0, 0.0, 0.0), 2.0, 1.0);
        accumulate_points(&mut cloud, &w, &scan2);
        assert_eq!(cloud.len(), n);
    }

    #[test]
    fn xyz_export_sorted_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cloud = PointCloud3D::new(1.0);
        cloud.insert(1.2, 0.0, 0.0);
        cloud.insert(0.3, 0.1, 0.4);
        let p = dir.path().join("c.xyz");
        export_xyz(&cloud, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "0.500000 0.500000 0.500000");
        assert_eq!(lines[1], "1.500000 0.500000 0.500000");

        let empty = PointCloud3D::new(1.0);
        let pe = dir.path().join("e.xyz");
        export_xyz(&empty, &pe).unwrap();
        assert!(std::fs::read(&pe).unwrap().is_empty());
    }
}
