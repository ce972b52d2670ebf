//! Simulated environment: world description, raycast lidar, robot motion.

use crate::geom::{
    normalize_angle, point_segment_distance, polygon_area, ray_segment_intersection, Point, Rect,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("failed to read world file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse world file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("world validation failed for {element}: {reason}")]
    Validation { element: String, reason: String },
    #[error("pose ({x:.3}, {y:.3}) is in collision")]
    PoseInCollision { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose { x, y, theta: normalize_angle(theta) }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Thick wall segment. The footprint is the centerline segment dilated by
/// `thickness / 2`, with the ends extended by the same amount so that
/// abutting walls seal their corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub thickness: f64,
}

impl Wall {
    pub fn a(&self) -> Point {
        Point::new(self.x1, self.y1)
    }

    pub fn b(&self) -> Point {
        Point::new(self.x2, self.y2)
    }

    /// Endpoints of the centerline extended by half the thickness.
    fn extended(&self) -> (Point, Point) {
        let h = self.thickness / 2.0;
        let len = self.a().dist(self.b());
        if len < 1e-12 {
            return (self.a(), self.b());
        }
        let dx = (self.x2 - self.x1) / len;
        let dy = (self.y2 - self.y1) / len;
        (
            Point::new(self.x1 - dx * h, self.y1 - dy * h),
            Point::new(self.x2 + dx * h, self.y2 + dy * h),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        let (a, b) = self.extended();
        point_segment_distance(p, a, b) <= self.thickness / 2.0
    }

    /// Corner polygon of the footprint rectangle.
    pub fn corners(&self) -> [Point; 4] {
        let (a, b) = self.extended();
        let len = a.dist(b);
        let h = self.thickness / 2.0;
        let (dx, dy) = if len < 1e-12 { (1.0, 0.0) } else { ((b.x - a.x) / len, (b.y - a.y) / len) };
        let (nx, ny) = (-dy, dx);
        [
            Point::new(a.x + nx * h, a.y + ny * h),
            Point::new(b.x + nx * h, b.y + ny * h),
            Point::new(b.x - nx * h, b.y - ny * h),
            Point::new(a.x - nx * h, a.y - ny * h),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub label: String,
    pub polygon: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub range_max: f64,
    pub beam_count: usize,
    pub angular_span: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub name: String,
    pub bounds: Rect,
    pub walls: Vec<Wall>,
    pub rooms: Vec<Room>,
    pub spawn: Pose,
    pub lidar: LidarConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub origin: Pose,
    pub ranges: Vec<f64>,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub now: f64,
    pub tick: f64,
}

impl SimClock {
    pub fn new(tick: f64) -> Self {
        assert!(tick > 0.0);
        SimClock { now: 0.0, tick }
    }

    pub fn step(&mut self) {
        self.now += self.tick;
    }

    pub fn advance(&mut self, dt: f64) {
        assert!(dt >= 0.0);
        self.now += dt;
    }
}

/// On-disk JSON schema for environment files.
#[derive(Serialize, Deserialize)]
struct WorldFile {
    name: String,
    bounds: [f64; 4],
    walls: Vec<[f64; 5]>,
    rooms: Vec<RoomFile>,
    spawn: [f64; 3],
    lidar: LidarConfig,
}

#[derive(Serialize, Deserialize)]
struct RoomFile {
    label: String,
    polygon: Vec<[f64; 2]>,
}

impl WorldSpec {
    pub fn load(path: &std::path::Path) -> Result<WorldSpec, WorldError> {
        let data = std::fs::read_to_string(path)?;
        Self::from_json(&data)
    }

    pub fn from_json(data: &str) -> Result<WorldSpec, WorldError> {
        let file: WorldFile = serde_json::from_str(data)?;
        let world = WorldSpec {
            name: file.name,
            bounds: Rect::new(file.bounds[0], file.bounds[1], file.bounds[2], file.bounds[3]),
            walls: file
                .walls
                .iter()
                .map(|w| Wall { x1: w[0], y1: w[1], x2: w[2], y2: w[3], thickness: w[4] })
                .collect(),
            rooms: file
                .rooms
                .into_iter()
                .map(|r| Room {
                    label: r.label,
                    polygon: r.polygon.iter().map(|p| Point::new(p[0], p[1])).collect(),
                })
                .collect(),
            spawn: Pose::new(file.spawn[0], file.spawn[1], file.spawn[2]),
            lidar: file.lidar,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn to_json(&self) -> String {
        let file = WorldFile {
            name: self.name.clone(),
            bounds: [self.bounds.xmin, self.bounds.ymin, self.bounds.xmax, self.bounds.ymax],
            walls: self
                .walls
                .iter()
                .map(|w| [w.x1, w.y1, w.x2, w.y2, w.thickness])
                .collect(),
            rooms: self
                .rooms
                .iter()
                .map(|r| RoomFile {
                    label: r.label.clone(),
                    polygon: r.polygon.iter().map(|p| [p.x, p.y]).collect(),
                })
                .collect(),
            spawn: [self.spawn.x, self.spawn.y, self.spawn.theta],
            lidar: self.lidar,
        };
        serde_json::to_string_pretty(&file).expect("world serialization")
    }

    /// Minimum grid resolution the wall thicknesses can support without
    /// leaking single-cell gaps.
    pub const DEFAULT_RESOLUTION: f64 = 0.1;

    pub fn validate(&self) -> Result<(), WorldError> {
        self.validate_at(Self::DEFAULT_RESOLUTION)
    }

    pub fn validate_at(&self, resolution: f64) -> Result<(), WorldError> {
        if self.bounds.width() <= 0.0 || self.bounds.height() <= 0.0 {
            return Err(WorldError::Validation {
                element: "bounds".into(),
                reason: "empty bounds rectangle".into(),
            });
        }
        for (i, w) in self.walls.iter().enumerate() {
            if w.thickness < 2.0 * resolution {
                return Err(WorldError::Validation {
                    element: format!("walls[{i}]"),
                    reason: format!(
                        "thickness {} below 2x grid resolution {}",
                        w.thickness, resolution
                    ),
                });
            }
        }
        for (i, r) in self.rooms.iter().enumerate() {
            if r.polygon.len() < 3 {
                return Err(WorldError::Validation {
                    element: format!("rooms[{i}] ({})", r.label),
                    reason: "polygon has fewer than 3 vertices".into(),
                });
            }
            if polygon_area(&r.polygon).abs() < 1e-9 {
                return Err(WorldError::Validation {
                    element: format!("rooms[{i}] ({})", r.label),
                    reason: "degenerate polygon".into(),
                });
            }
        }
        let spawn = self.spawn.position();
        if !self.bounds.contains(spawn) {
            return Err(WorldError::Validation {
                element: "spawn".into(),
                reason: "spawn outside world bounds".into(),
            });
        }
        if self.walls.iter().any(|w| w.contains(spawn)) {
            return Err(WorldError::Validation {
                element: "spawn".into(),
                reason: "spawn inside a wall footprint".into(),
            });
        }
        if self.lidar.beam_count == 0 || self.lidar.range_max <= 0.0 {
            return Err(WorldError::Validation {
                element: "lidar".into(),
                reason: "beam_count and range_max must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn in_collision(&self, p: Point) -> bool {
        !self.bounds.contains(p) || self.walls.iter().any(|w| w.contains(p))
    }
}

pub fn load_world(path: &std::path::Path) -> Result<WorldSpec, WorldError> {
    WorldSpec::load(path)
}

/// Exact first-hit raycast against wall rectangles. Resolution-independent
/// and deterministic; beams with no hit within `range_max` return `range_max`.
pub fn raycast_scan(world: &WorldSpec, pose: &Pose, clock: &SimClock) -> Result<LidarScan, WorldError> {
    let origin = pose.position();
    if world.in_collision(origin) {
        return Err(WorldError::PoseInCollision { x: pose.x, y: pose.y });
    }
    let lidar = world.lidar;
    let mut ranges = Vec::with_capacity(lidar.beam_count);
    for i in 0..lidar.beam_count {
        let bearing = pose.theta + beam_offset(&lidar, i);
        let dir = (bearing.cos(), bearing.sin());
        let mut best = lidar.range_max;
        for wall in &world.walls {
            let corners = wall.corners();
            for k in 0..4 {
                let a = corners[k];
                let b = corners[(k + 1) % 4];
                if let Some(t) = ray_segment_intersection(origin, dir, a, b) {
                    if t < best {
                        best = t;
                    }
                }
            }
        }
        ranges.push(best);
    }
    Ok(LidarScan { origin: *pose, ranges, timestamp: clock.now })
}

/// Angular offset of beam `i` from the sensor heading. Beams are evenly
/// spaced over the span; a full 2*pi span does not duplicate the wrap beam.
pub fn beam_offset(lidar: &LidarConfig, i: usize) -> f64 {
    let full_circle = (lidar.angular_span - 2.0 * std::f64::consts::PI).abs() < 1e-9;
    if lidar.beam_count == 1 {
        return 0.0;
    }
    let denom = if full_circle { lidar.beam_count } else { lidar.beam_count - 1 } as f64;
    -lidar.angular_span / 2.0 + lidar.angular_span * i as f64 / denom
}

/// Advance the robot along a polyline at constant speed for one tick.
/// Returns the new pose and the distance covered.
pub fn advance_along_path(
    world: &WorldSpec,
    pose: &Pose,
    path: &[Point],
    clock: &SimClock,
    speed: f64,
) -> Result<(Pose, f64), WorldError> {
    advance_with_progress(world, pose, path, clock, speed).map(|(p, d, _)| (p, d))
}

/// Like `advance_along_path` but also reports how many leading waypoints
/// were fully passed this tick, so a driver can keep a cursor into the path.
pub fn advance_with_progress(
    world: &WorldSpec,
    pose: &Pose,
    path: &[Point],
    clock: &SimClock,
    speed: f64,
) -> Result<(Pose, f64, usize), WorldError> {
    let mut budget = speed * clock.tick;
    let mut pos = pose.position();
    let mut heading = pose.theta;
    let mut traveled = 0.0;

    // Skip waypoints we are already standing on.
    let mut idx = 0;
    while idx < path.len() && pos.dist(path[idx]) < 1e-9 {
        idx += 1;
    }
    while budget > 1e-12 && idx < path.len() {
        let target = path[idx];
        let seg = pos.dist(target);
        if seg < 1e-12 {
            idx += 1;
            continue;
        }
        let dx = (target.x - pos.x) / seg;
        let dy = (target.y - pos.y) / seg;
        heading = dy.atan2(dx);
        let step = seg.min(budget);
        pos = Point::new(pos.x + dx * step, pos.y + dy * step);
        traveled += step;
        budget -= step;
        if step >= seg - 1e-12 {
            idx += 1;
        }
        if world.in_collision(pos) {
            return Err(WorldError::PoseInCollision { x: pos.x, y: pos.y });
        }
    }
    Ok((Pose::new(pos.x, pos.y, heading), traveled, idx))
}

/// Ground-truth free-space mask over the world bounds: a cell is free iff
/// its center lies inside bounds and outside every wall footprint.
pub struct FreeMask {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Point,
    pub cells: Vec<bool>,
}

impl FreeMask {
    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn at(&self, cx: usize, cy: usize) -> bool {
        self.cells[cy * self.width + cx]
    }
}

pub fn true_free_mask(world: &WorldSpec, resolution: f64) -> FreeMask {
    assert!(resolution > 0.0);
    let width = (world.bounds.width() / resolution).round() as usize;
    let height = (world.bounds.height() / resolution).round() as usize;
    let origin = Point::new(
        world.bounds.xmin + resolution / 2.0,
        world.bounds.ymin + resolution / 2.0,
    );
    let mut cells = vec![false; width * height];
    for cy in 0..height {
        for cx in 0..width {
            let p = Point::new(
                origin.x + cx as f64 * resolution,
                origin.y + cy as f64 * resolution,
            );
            cells[cy * width + cx] = world.bounds.contains(p) && !world.walls.iter().any(|w| w.contains(p));
        }
    }
    FreeMask { width, height, resolution, origin, cells }
}
