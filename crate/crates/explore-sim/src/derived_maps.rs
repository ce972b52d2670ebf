//! Topological skeleton and semantic region map derived from the image map.
//!
//! These feed the exploration strategy: the semantic map supplies region
//! membership for the same-region flag and the semantic sampling point.

use crate::geom::Point;
use crate::mapping::{ImageMap, MapError, OccupancyGrid, BLACK, WHITE};
use std::collections::BTreeMap;
use std::io::Write;

/// Tunables for the derived-map pipeline. Lengths in meters; `resolution`
/// converts them to pixels.
#[derive(Debug, Clone, Copy)]
pub struct DerivedConfig {
    pub resolution: f64,
    pub min_wall_len: f64,
    pub door_gap_max: f64,
    pub min_region_area: f64,
}

impl Default for DerivedConfig {
    fn default() -> Self {
        DerivedConfig {
            resolution: 0.1,
            min_wall_len: 1.0,
            door_gap_max: 1.4,
            min_region_area: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl BinaryMask {
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    fn get(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.cells[y as usize * self.width + x as usize]
        }
    }
}

/// Binarize (WHITE -> 1) and apply one 3x3 morphological opening.
pub fn preprocess_binary(img: &ImageMap) -> BinaryMask {
    let (w, h) = (img.width, img.height);
    let ones = BinaryMask {
        width: w,
        height: h,
        cells: img.pixels.iter().map(|p| *p == WHITE).collect(),
    };
    dilate3(&erode3(&ones))
}

fn erode3(m: &BinaryMask) -> BinaryMask {
    let mut out = vec![false; m.cells.len()];
    for y in 0..m.height as i64 {
        for x in 0..m.width as i64 {
            let mut all = true;
            'n: for dy in -1..=1 {
                for dx in -1..=1 {
                    if !m.get(x + dx, y + dy) {
                        all = false;
                        break 'n;
                    }
                }
            }
            out[y as usize * m.width + x as usize] = all;
        }
    }
    BinaryMask { width: m.width, height: m.height, cells: out }
}

fn dilate3(m: &BinaryMask) -> BinaryMask {
    let mut out = vec![false; m.cells.len()];
    for y in 0..m.height as i64 {
        for x in 0..m.width as i64 {
            let mut any = false;
            'n: for dy in -1..=1 {
                for dx in -1..=1 {
                    if m.get(x + dx, y + dy) {
                        any = true;
                        break 'n;
                    }
                }
            }
            out[y as usize * m.width + x as usize] = any;
        }
    }
    BinaryMask { width: m.width, height: m.height, cells: out }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonMap {
    pub width: usize,
    pub height: usize,
    pub skeleton: Vec<bool>,
}

impl SkeletonMap {
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.skeleton[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.skeleton.iter().filter(|b| **b).count()
    }
}

// 8-neighborhood in the cyclic order N, NE, E, SE, S, SW, W, NW.
const NBR: [(i64, i64); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

fn neighbors(cells: &[bool], w: usize, h: usize, x: i64, y: i64) -> [bool; 8] {
    let mut out = [false; 8];
    for (k, (dx, dy)) in NBR.iter().enumerate() {
        let (nx, ny) = (x + dx, y + dy);
        out[k] = nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 && cells[ny as usize * w + nx as usize];
    }
    out
}

fn transitions(n: &[bool; 8]) -> usize {
    (0..8).filter(|k| !n[*k] && n[(k + 1) % 8]).count()
}

fn zs_deletable(n: &[bool; 8], subpass: usize) -> bool {
    let b = n.iter().filter(|v| **v).count();
    if !(2..=6).contains(&b) || transitions(n) != 1 {
        return false;
    }
    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
    if subpass == 0 {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Iterative two-subpass Zhang-Suen thinning to fixpoint, followed by a
/// cleanup pass that removes redundant pixels of any remaining 2x2 blocks
/// via simple-point deletion.
pub fn thin_skeleton(mask: &BinaryMask) -> SkeletonMap {
    let (w, h) = (mask.width, mask.height);
    let mut sk = mask.cells.clone();
    loop {
        let mut changed = false;
        for subpass in 0..2 {
            let mut to_delete = Vec::new();
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    if !sk[y as usize * w + x as usize] {
                        continue;
                    }
                    let n = neighbors(&sk, w, h, x, y);
                    if zs_deletable(&n, subpass) {
                        to_delete.push((x as usize, y as usize));
                    }
                }
            }
            for (x, y) in &to_delete {
                sk[y * w + x] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Remove 2x2 blocks the parallel passes can leave behind; each deletion
    // is a verified simple point so connectivity is preserved.
    loop {
        let mut deleted = false;
        'scan: for y in 0..h.saturating_sub(1) {
            for x in 0..w.saturating_sub(1) {
                let block = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
                if !block.iter().all(|(bx, by)| sk[by * w + bx]) {
                    continue;
                }
                for (bx, by) in block {
                    let n = neighbors(&sk, w, h, bx as i64, by as i64);
                    let b = n.iter().filter(|v| **v).count();
                    if (2..=6).contains(&b) && transitions(&n) == 1 {
                        sk[by * w + bx] = false;
                        deleted = true;
                        break 'scan;
                    }
                }
            }
        }
        if !deleted {
            break;
        }
    }
    SkeletonMap { width: w, height: h, skeleton: sk }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// Maximal axis-aligned run of BLACK pixels, in cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WallSegment {
    pub x: usize,
    pub y: usize,
    pub len: usize,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WallLines {
    pub segments: Vec<WallSegment>,
    /// Run counts per 10-degree bin over [0, 180).
    pub orientation_histogram: [usize; 18],
}

/// Extract wall lines as maximal horizontal/vertical BLACK runs of at least
/// `min_wall_len` meters.
pub fn extract_walls(img: &ImageMap, cfg: &DerivedConfig) -> WallLines {
    let min_px = (cfg.min_wall_len / cfg.resolution).round().max(1.0) as usize;
    let mut segments = Vec::new();
    let mut histogram = [0usize; 18];
    for y in 0..img.height {
        let mut x = 0;
        while x < img.width {
            if img.at(x, y) == BLACK {
                let start = x;
                while x < img.width && img.at(x, y) == BLACK {
                    x += 1;
                }
                let len = x - start;
                if len >= min_px {
                    segments.push(WallSegment { x: start, y, len, orientation: Orientation::Horizontal });
                    histogram[0] += 1;
                }
            } else {
                x += 1;
            }
        }
    }
    for x in 0..img.width {
        let mut y = 0;
        while y < img.height {
            if img.at(x, y) == BLACK {
                let start = y;
                while y < img.height && img.at(x, y) == BLACK {
                    y += 1;
                }
                let len = y - start;
                if len >= min_px {
                    segments.push(WallSegment { x, y: start, len, orientation: Orientation::Vertical });
                    histogram[9] += 1;
                }
            } else {
                y += 1;
            }
        }
    }
    WallLines { segments, orientation_histogram: histogram }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionInfo {
    pub color: (u8, u8, u8),
    pub pixel_count: usize,
    pub centroid: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub width: usize,
    pub height: usize,
    /// Per-pixel region id; 0 means unassigned/unknown.
    pub labels: Vec<u32>,
    pub regions: BTreeMap<u32, RegionInfo>,
    /// Region merges observed while matching ids against the previous map:
    /// (kept, absorbed).
    pub merges: Vec<(u32, u32)>,
}

impl SemanticMap {
    pub fn empty(width: usize, height: usize) -> Self {
        SemanticMap {
            width,
            height,
            labels: vec![0; width * height],
            regions: BTreeMap::new(),
            merges: Vec::new(),
        }
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

/// Deterministic palette keyed by region id.
pub fn region_color(id: u32) -> (u8, u8, u8) {
    let hue = (id.wrapping_mul(47) % 360) as f64;
    let (h, s, v) = (hue / 60.0, 0.65, 0.9);
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    )
}

/// Segment the free space of `img` into labeled regions. Wall runs are
/// virtually extended across free-space gaps up to `door_gap_max` to close
/// doorways, remaining free space is 4-connected flood-filled, small regions
/// merge into their largest neighbor, and ids are matched to `prev` by
/// maximal pixel overlap.
pub fn segment_regions(
    img: &ImageMap,
    walls: &WallLines,
    prev: Option<&SemanticMap>,
    cfg: &DerivedConfig,
) -> SemanticMap {
    let (w, h) = (img.width, img.height);
    let gap_px = (cfg.door_gap_max / cfg.resolution).round() as i64;
    let mut virtual_wall = vec![false; w * h];

    // Close door gaps: from each wall-run end, walk along the run direction
    // through WHITE pixels; if BLACK is reached within the gap limit, the
    // walked pixels become virtual wall.
    for seg in &walls.segments {
        let (dx, dy) = match seg.orientation {
            Orientation::Horizontal => (1i64, 0i64),
            Orientation::Vertical => (0, 1),
        };
        let ends = [
            (seg.x as i64 - dx, seg.y as i64 - dy, -dx, -dy),
            (
                seg.x as i64 + dx * seg.len as i64,
                seg.y as i64 + dy * seg.len as i64,
                dx,
                dy,
            ),
        ];
        for (sx, sy, ex, ey) in ends {
            let mut walked = Vec::new();
            let (mut cx, mut cy) = (sx, sy);
            let mut closed = false;
            for _ in 0..gap_px {
                if cx < 0 || cy < 0 || cx >= w as i64 || cy >= h as i64 {
                    break;
                }
                let px = img.at(cx as usize, cy as usize);
                if px != WHITE {
                    // Wall pixels close the gap; so does unknown space: an
                    // opening is not trusted until its far side has been
                    // observed, which keeps half-seen doorways from merging
                    // the rooms they join during exploration.
                    closed = true;
                    break;
                }
                walked.push((cx as usize, cy as usize));
                cx += ex;
                cy += ey;
            }
            if closed {
                for (vx, vy) in walked {
                    virtual_wall[vy * w + vx] = true;
                }
            }
        }
    }

    // 4-connected flood fill over WHITE pixels that are not virtual wall.
    let mut labels = vec![0u32; w * h];
    let mut next = 1u32;
    let fillable = |i: usize| img.pixels[i] == WHITE && !virtual_wall[i];
    for start in 0..w * h {
        if labels[start] != 0 || !fillable(start) {
            continue;
        }
        let id = next;
        next += 1;
        labels[start] = id;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if labels[j] == 0 && fillable(j) {
                    labels[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 { visit(i - 1); }
            if x + 1 < w { visit(i + 1); }
            if y > 0 { visit(i - w); }
            if y + 1 < h { visit(i + w); }
        }
    }

    // Merge regions below the minimum area into their largest 4-adjacent
    // neighbor region (crossing virtual walls counts as adjacency).
    let min_px = (cfg.min_region_area / (cfg.resolution * cfg.resolution)).round() as usize;
    loop {
        let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
        for &l in &labels {
            if l != 0 {
                *sizes.entry(l).or_default() += 1;
            }
        }
        let small: Vec<u32> = sizes
            .iter()
            .filter(|(_, s)| **s < min_px)
            .map(|(id, _)| *id)
            .collect();
        let mut merged_any = false;
        for id in small {
            let mut adj: BTreeMap<u32, usize> = BTreeMap::new();
            for i in 0..w * h {
                if labels[i] != id {
                    continue;
                }
                let (x, y) = (i % w, i / w);
                let mut count = |j: usize| {
                    // Look through up to 2 px of virtual wall for a neighbor
                    // region across a closed doorway.
                    if labels[j] != 0 && labels[j] != id {
                        *adj.entry(labels[j]).or_default() += 1;
                    }
                };
                if x > 0 { count(i - 1); }
                if x + 1 < w { count(i + 1); }
                if y > 0 { count(i - w); }
                if y + 1 < h { count(i + w); }
            }
            if let Some((&target, _)) = adj.iter().max_by_key(|(id, n)| (**n, std::cmp::Reverse(**id))) {
                for l in labels.iter_mut() {
                    if *l == id {
                        *l = target;
                    }
                }
                merged_any = true;
            }
        }
        if !merged_any {
            break;
        }
    }

    // Virtual-wall pixels are WHITE and must end up labeled: assign each to
    // the adjacent region with the most contact, iterating until stable.
    loop {
        let mut changed = false;
        for i in 0..w * h {
            if labels[i] != 0 || img.pixels[i] != WHITE {
                continue;
            }
            let (x, y) = (i % w, i / w);
            let mut adj: BTreeMap<u32, usize> = BTreeMap::new();
            let mut count = |j: usize| {
                if labels[j] != 0 {
                    *adj.entry(labels[j]).or_default() += 1;
                }
            };
            if x > 0 { count(i - 1); }
            if x + 1 < w { count(i + 1); }
            if y > 0 { count(i - w); }
            if y + 1 < h { count(i + w); }
            if let Some((&target, _)) = adj.iter().max_by_key(|(id, n)| (**n, std::cmp::Reverse(**id))) {
                labels[i] = target;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // Match ids to the previous map by maximal overlap; unmatched regions
    // get fresh ids above anything previously assigned.
    let mut merges = Vec::new();
    if let Some(prev) = prev {
        let mut overlap: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for i in 0..w * h {
            if labels[i] != 0 && prev.labels[i] != 0 {
                *overlap.entry((labels[i], prev.labels[i])).or_default() += 1;
            }
        }
        let mut pairs: Vec<((u32, u32), usize)> = overlap.into_iter().collect();
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut new_to_prev: BTreeMap<u32, u32> = BTreeMap::new();
        let mut prev_used: BTreeMap<u32, u32> = BTreeMap::new();
        for ((new_id, prev_id), _n) in pairs {
            if prev_used.contains_key(&prev_id) {
                // A previous region whose best match is already taken merged
                // into the region that took it.
                if new_to_prev.get(&new_id).is_some() {
                    merges.push((new_to_prev[&new_id], prev_id));
                }
                continue;
            }
            if new_to_prev.contains_key(&new_id) {
                merges.push((new_to_prev[&new_id], prev_id));
                prev_used.insert(prev_id, new_id);
                continue;
            }
            new_to_prev.insert(new_id, prev_id);
            prev_used.insert(prev_id, new_id);
        }
        let mut next_fresh = prev.regions.keys().max().copied().unwrap_or(0) + 1;
        let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
        let mut present: Vec<u32> = labels.iter().copied().filter(|l| *l != 0).collect();
        present.sort_unstable();
        present.dedup();
        for id in present {
            let target = if let Some(p) = new_to_prev.get(&id) {
                *p
            } else {
                let t = next_fresh;
                next_fresh += 1;
                t
            };
            remap.insert(id, target);
        }
        for l in labels.iter_mut() {
            if *l != 0 {
                *l = remap[l];
            }
        }
    }

    let mut regions: BTreeMap<u32, RegionInfo> = BTreeMap::new();
    for i in 0..w * h {
        let id = labels[i];
        if id == 0 {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let e = regions.entry(id).or_insert(RegionInfo {
            color: region_color(id),
            pixel_count: 0,
            centroid: (0.0, 0.0),
        });
        e.pixel_count += 1;
        e.centroid.0 += x as f64;
        e.centroid.1 += y as f64;
    }
    for info in regions.values_mut() {
        info.centroid.0 /= info.pixel_count as f64;
        info.centroid.1 /= info.pixel_count as f64;
    }
    SemanticMap { width: w, height: h, labels, regions, merges }
}

/// Region membership of a world point, via the occupancy grid's affine map.
pub fn region_of(sem: &SemanticMap, grid: &OccupancyGrid, p: Point) -> Result<Option<u32>, MapError> {
    let (cx, cy) = grid
        .world_to_cell(p)
        .ok_or(MapError::OutOfExtent { x: p.x, y: p.y })?;
    let id = sem.label(cx, cy);
    Ok(if id == 0 { None } else { Some(id) })
}

/// Skeleton export: skeleton pixels 0, background 255, north-up PGM.
pub fn export_skeleton_pgm(sk: &SkeletonMap, path: &std::path::Path) -> Result<(), MapError> {
    let mut out = Vec::new();
    write!(out, "P5\n{} {}\n255\n", sk.width, sk.height)?;
    for y in (0..sk.height).rev() {
        for x in 0..sk.width {
            out.push(if sk.at(x, y) { 0 } else { 255 });
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Semantic map export: P6 color raster with the deterministic palette,
/// unlabeled pixels black; palette table as CSV (id,r,g,b,pixel_count).
pub fn export_semantic_ppm(
    sem: &SemanticMap,
    ppm_path: &std::path::Path,
    palette_csv_path: &std::path::Path,
) -> Result<(), MapError> {
    let mut out = Vec::new();
    write!(out, "P6\n{} {}\n255\n", sem.width, sem.height)?;
    for y in (0..sem.height).rev() {
        for x in 0..sem.width {
            let id = sem.label(x, y);
            let (r, g, b) = if id == 0 { (0, 0, 0) } else { region_color(id) };
            out.extend_from_slice(&[r, g, b]);
        }
    }
    std::fs::write(ppm_path, out)?;

    let mut csv = String::from("id,r,g,b,pixel_count\n");
    for (id, info) in &sem.regions {
        let (r, g, b) = info.color;
        csv.push_str(&format!("{id},{r},{g},{b},{}\n", info.pixel_count));
    }
    std::fs::write(palette_csv_path, csv)?;
    Ok(())
}

/// 8-connected component count of a boolean raster; test and acceptance
/// helper shared with the thinning invariants.
pub fn count_components8(cells: &[bool], w: usize, h: usize) -> usize {
    let mut seen = vec![false; cells.len()];
    let mut components = 0;
    for start in 0..cells.len() {
        if !cells[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in NBR {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if cells[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    components
}
