//! Voxel occupancy maps over an octree, in two flavors: a per-tick binary
//! snapshot used as the hard collision constraint, and a "danger" map whose
//! cells reset to a high cost when observed occupied and then decay over
//! time, preserving a fading memory of where things recently moved.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{voxel_key_of, Aabb, Point3, VoxelKey};

/// Cell semantics of a map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapMode {
    /// Cells are 1 (occupied this tick) or absent; rebuilt every insert.
    Binary,
    /// Cells carry a danger cost in `[0, reset_value]` that decays between
    /// observations.
    Full,
}

/// Parameters of the observation-reset decay process.
///
/// An observed cell resets to `reset_value`; afterwards each tick applies
/// `c <- c + ln(c) * (delta_t * alpha)`, clamped at 0. Costs stay below 1 so
/// `ln` is negative and the cost hugs the reset value for a while before
/// collapsing.
#[derive(Clone, Copy, Debug)]
pub struct DecayParams {
    pub alpha: f64,
    pub reset_value: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            reset_value: 0.999,
        }
    }
}

/// One decay update of a single cost value.
pub fn decayed(cost: f64, delta_t: f64, alpha: f64) -> f64 {
    (cost + cost.ln() * (delta_t * alpha)).max(0.0)
}

/// Simulated time for a cell to decay from `reset_value` to exactly 0 when
/// stepped every `delta_t` seconds.
pub fn decay_time(delta_t: f64, params: &DecayParams) -> f64 {
    let mut c = params.reset_value;
    let mut ticks: u64 = 0;
    while c > 0.0 {
        c = decayed(c, delta_t, params.alpha);
        ticks += 1;
        if ticks > 100_000_000 {
            // alpha <= 0 or reset_value >= 1 never converge.
            return f64::INFINITY;
        }
    }
    ticks as f64 * delta_t
}

/// Octree-backed voxel map over a fixed axis-aligned region.
#[derive(Clone, Debug)]
pub struct OccupancyOctree {
    mode: MapMode,
    resolution: f64,
    origin: Point3,
    /// Cell count per axis; keys live in `[0, cells)^3`.
    cells: i32,
    /// Tree depth: the root spans `2^depth` cells per axis.
    depth: u32,
    root: Option<Node>,
    /// Cells observed by inserts since the last decay step (full mode);
    /// those skip that decay step so a fresh reset survives the tick.
    observed: HashSet<VoxelKey>,
    /// Points silently dropped because they fell outside the bounds.
    ignored_points: u64,
}

#[derive(Clone, Debug)]
enum Node {
    Branch(Box<[Option<Node>; 8]>),
    Leaf(f64),
}

impl OccupancyOctree {
    /// Creates an empty map covering `bounds` (a cube is typical) with cubic
    /// cells of side `resolution`.
    pub fn new(mode: MapMode, resolution: f64, bounds: Aabb) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        let extent = (bounds.max - bounds.min).amax();
        let cells = (extent / resolution).round().max(1.0) as i32;
        let depth = 32 - (cells as u32).next_power_of_two().leading_zeros() - 1;
        let depth = if (1 << depth) < cells { depth + 1 } else { depth };
        Self {
            mode,
            resolution,
            origin: bounds.min,
            cells,
            depth,
            root: None,
            observed: HashSet::new(),
            ignored_points: 0,
        }
    }

    pub fn mode(&self) -> MapMode {
        self.mode
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> &Point3 {
        &self.origin
    }

    /// Points dropped so far for being outside the map bounds.
    pub fn ignored_points(&self) -> u64 {
        self.ignored_points
    }

    pub fn key_of(&self, p: &Point3) -> VoxelKey {
        voxel_key_of(p, self.resolution, &self.origin)
    }

    fn in_bounds(&self, key: &VoxelKey) -> bool {
        let r = 0..self.cells;
        r.contains(&key.i) && r.contains(&key.j) && r.contains(&key.k)
    }

    /// Inserts a point cloud already expressed in the map frame.
    ///
    /// Binary mode rebuilds the map as a snapshot of exactly this cloud.
    /// Full mode resets every observed cell to `reset_value` and remembers
    /// it as observed for the next decay step. Out-of-bounds points are
    /// dropped and tallied.
    pub fn insert_points(&mut self, points: &[Point3], params: &DecayParams) {
        if self.mode == MapMode::Binary {
            self.root = None;
        }
        let value = match self.mode {
            MapMode::Binary => 1.0,
            MapMode::Full => params.reset_value,
        };
        for p in points {
            let key = self.key_of(p);
            if !self.in_bounds(&key) {
                self.ignored_points += 1;
                continue;
            }
            self.set(&key, value);
            if self.mode == MapMode::Full {
                self.observed.insert(key);
            }
        }
    }

    /// Applies one decay update to every nonzero cell that was not observed
    /// since the last decay, then clears the observed set. Fully decayed
    /// cells are pruned from the tree. Binary maps do not decay.
    pub fn decay_step(&mut self, delta_t: f64, params: &DecayParams) -> Result<()> {
        if self.mode == MapMode::Binary {
            return Err(Error::ModeMismatch("binary snapshot maps do not decay"));
        }
        if let Some(root) = self.root.take() {
            self.root = decay_node(
                root,
                self.depth,
                VoxelKey::new(0, 0, 0),
                delta_t,
                params.alpha,
                &self.observed,
            );
        }
        self.observed.clear();
        Ok(())
    }

    /// Cost at a cell: 0 when absent, 1 for occupied binary cells.
    pub fn cost_at(&self, key: &VoxelKey) -> f64 {
        let mut node = match &self.root {
            Some(n) => n,
            None => return 0.0,
        };
        if !self.in_bounds(key) {
            return 0.0;
        }
        let mut level = self.depth;
        loop {
            match node {
                Node::Leaf(v) => return *v,
                Node::Branch(children) => {
                    level -= 1;
                    match &children[child_index(key, level)] {
                        Some(child) => node = child,
                        None => return 0.0,
                    }
                }
            }
        }
    }

    /// Keys of all occupied (nonzero) cells, sorted by `(i, j, k)`.
    pub fn occupied(&self) -> Vec<VoxelKey> {
        self.leaves().into_iter().map(|(k, _)| k).collect()
    }

    /// All nonzero cells with their costs, sorted by `(i, j, k)`.
    pub fn leaves(&self) -> Vec<(VoxelKey, f64)> {
        let mut out = Vec::new();
        if let Some(root) = &self.root {
            collect_leaves(root, self.depth, VoxelKey::new(0, 0, 0), &mut out);
        }
        out.sort_by_key(|(k, _)| (k.i, k.j, k.k));
        out
    }

    /// Number of nonzero cells.
    pub fn len(&self) -> usize {
        self.leaves().len()
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    /// Sets a cell to `value` (for tests and map construction).
    pub fn set(&mut self, key: &VoxelKey, value: f64) {
        if !self.in_bounds(key) {
            return;
        }
        let depth = self.depth;
        let root = self.root.get_or_insert_with(|| {
            if depth == 0 {
                Node::Leaf(0.0)
            } else {
                Node::Branch(empty_children())
            }
        });
        set_node(root, depth, key, value);
    }

    /// Serializes the map as text: a header line `octree <resolution> <mode>`
    /// followed by one `i j k value` line per nonzero cell in sorted order.
    pub fn write_text(&self) -> String {
        let mode = match self.mode {
            MapMode::Binary => "binary",
            MapMode::Full => "full",
        };
        let mut out = String::new();
        let _ = writeln!(out, "octree {} {}", self.resolution, mode);
        for (key, value) in self.leaves() {
            let _ = writeln!(out, "{} {} {} {:.7}", key.i, key.j, key.k, value);
        }
        out
    }

    /// Parses the text form produced by [`write_text`](Self::write_text).
    /// The reconstructed map is anchored at the world origin and sized to the
    /// largest key present.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty octree file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("octree") {
            return Err(Error::Parse("octree header missing".into()));
        }
        let resolution: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("bad octree resolution".into()))?;
        let mode = match parts.next() {
            Some("binary") => MapMode::Binary,
            Some("full") => MapMode::Full,
            other => return Err(Error::Parse(format!("bad octree mode {other:?}"))),
        };
        let mut entries = Vec::new();
        let mut max_cell = 0i32;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next_i32 = || -> Result<i32> {
                it.next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad octree line '{line}'")))
            };
            let key = VoxelKey::new(next_i32()?, next_i32()?, next_i32()?);
            let value: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad octree line '{line}'")))?;
            max_cell = max_cell.max(key.i).max(key.j).max(key.k);
            entries.push((key, value));
        }
        let side = (max_cell as f64 + 1.0) * resolution;
        let bounds = Aabb::new(
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(side, side, side),
        );
        let mut map = Self::new(mode, resolution, bounds);
        for (key, value) in entries {
            map.set(&key, value);
        }
        Ok(map)
    }
}

fn empty_children() -> Box<[Option<Node>; 8]> {
    Box::new([None, None, None, None, None, None, None, None])
}

/// Child octant of `key` at `level` (bit `level` of each axis).
fn child_index(key: &VoxelKey, level: u32) -> usize {
    (((key.i >> level) & 1) | (((key.j >> level) & 1) << 1) | (((key.k >> level) & 1) << 2))
        as usize
}

fn set_node(node: &mut Node, level: u32, key: &VoxelKey, value: f64) {
    match node {
        Node::Leaf(v) => *v = value,
        Node::Branch(children) => {
            let level = level - 1;
            let slot = &mut children[child_index(key, level)];
            let child = slot.get_or_insert_with(|| {
                if level == 0 {
                    Node::Leaf(0.0)
                } else {
                    Node::Branch(empty_children())
                }
            });
            set_node(child, level, key, value);
        }
    }
}

fn collect_leaves(node: &Node, level: u32, base: VoxelKey, out: &mut Vec<(VoxelKey, f64)>) {
    match node {
        Node::Leaf(v) => {
            if *v != 0.0 {
                out.push((base, *v));
            }
        }
        Node::Branch(children) => {
            let level = level - 1;
            for (octant, child) in children.iter().enumerate() {
                if let Some(child) = child {
                    let key = VoxelKey::new(
                        base.i | (((octant as i32) & 1) << level),
                        base.j | ((((octant as i32) >> 1) & 1) << level),
                        base.k | ((((octant as i32) >> 2) & 1) << level),
                    );
                    collect_leaves(child, level, key, out);
                }
            }
        }
    }
}

/// Decays a subtree, returning `None` when it becomes empty.
fn decay_node(
    node: Node,
    level: u32,
    base: VoxelKey,
    delta_t: f64,
    alpha: f64,
    observed: &HashSet<VoxelKey>,
) -> Option<Node> {
    match node {
        Node::Leaf(v) => {
            if observed.contains(&base) {
                return Some(Node::Leaf(v));
            }
            let next = decayed(v, delta_t, alpha);
            if next > 0.0 {
                Some(Node::Leaf(next))
            } else {
                None
            }
        }
        Node::Branch(mut children) => {
            let level = level - 1;
            let mut any = false;
            for octant in 0..8 {
                if let Some(child) = children[octant].take() {
                    let key = VoxelKey::new(
                        base.i | (((octant as i32) & 1) << level),
                        base.j | ((((octant as i32) >> 1) & 1) << level),
                        base.k | ((((octant as i32) >> 2) & 1) << level),
                    );
                    children[octant] = decay_node(child, level, key, delta_t, alpha, observed);
                    any |= children[octant].is_some();
                }
            }
            if any {
                Some(Node::Branch(children))
            } else {
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TICK: f64 = 1.0 / 15.0;

    fn cube3m() -> Aabb {
        Aabb::from_center_size(Point3::new(0.0, 0.0, 0.0), 3.0)
    }

    #[test]
    fn decay_single_steps_match_direct_evaluation() {
        assert_relative_eq!(decayed(0.999, TICK, 0.3), 0.9989800, epsilon = 5e-8);
        assert_relative_eq!(decayed(0.5, TICK, 0.3), 0.486137, epsilon = 5e-7);
        assert_eq!(decayed(0.01, TICK, 0.3), 0.0);
    }

    #[test]
    fn decay_time_for_paper_params_lands_in_band() {
        let t = decay_time(TICK, &DecayParams::default());
        assert!((20.0..=29.0).contains(&t), "decay time {t}");
    }

    #[test]
    fn doubling_alpha_roughly_halves_decay_time() {
        let base = decay_time(TICK, &DecayParams::default());
        let fast = decay_time(
            TICK,
            &DecayParams {
                alpha: 0.6,
                reset_value: 0.999,
            },
        );
        assert!((base / fast - 2.0).abs() < 0.2, "ratio {}", base / fast);
    }

    #[test]
    fn huge_alpha_decays_in_a_couple_of_steps() {
        let params = DecayParams {
            alpha: 20_000.0,
            reset_value: 0.999,
        };
        let t = decay_time(TICK, &params);
        assert!(t <= 2.0 * TICK + 1e-12, "decay time {t}");
    }

    #[test]
    fn binary_insert_is_a_snapshot() {
        let mut map = OccupancyOctree::new(MapMode::Binary, 0.05, cube3m());
        let params = DecayParams::default();
        map.insert_points(&[Point3::new(0.1, 0.1, 0.1)], &params);
        let first = map.key_of(&Point3::new(0.1, 0.1, 0.1));
        assert_eq!(map.cost_at(&first), 1.0);
        map.insert_points(&[Point3::new(-0.4, 0.0, 0.2)], &params);
        assert_eq!(map.cost_at(&first), 0.0, "snapshot must forget old cells");
        assert_eq!(map.occupied().len(), 1);
    }

    #[test]
    fn binary_map_refuses_decay() {
        let mut map = OccupancyOctree::new(MapMode::Binary, 0.05, cube3m());
        assert!(matches!(
            map.decay_step(TICK, &DecayParams::default()),
            Err(Error::ModeMismatch(_))
        ));
    }

    #[test]
    fn full_mode_resets_then_decays_and_prunes() {
        let mut map = OccupancyOctree::new(MapMode::Full, 0.05, cube3m());
        let params = DecayParams::default();
        let p = Point3::new(0.3, -0.2, 0.7);
        let key = map.key_of(&p);
        map.insert_points(&[p], &params);
        assert_eq!(map.cost_at(&key), 0.999);
        // Observed this tick: the first decay skips the cell.
        map.decay_step(TICK, &params).unwrap();
        assert_eq!(map.cost_at(&key), 0.999);
        // Unobserved afterwards: decays every step and is pruned at zero.
        let mut steps = 0;
        while map.cost_at(&key) > 0.0 {
            map.decay_step(TICK, &params).unwrap();
            steps += 1;
            assert!(steps < 1000);
        }
        assert!(map.is_empty(), "fully decayed cells must be pruned");
        let expected = decay_time(TICK, &params) / TICK;
        assert_eq!(steps as f64, expected);
    }

    #[test]
    fn out_of_bounds_points_are_counted_not_inserted() {
        let mut map = OccupancyOctree::new(MapMode::Full, 0.05, cube3m());
        map.insert_points(&[Point3::new(5.0, 0.0, 0.0)], &DecayParams::default());
        assert!(map.is_empty());
        assert_eq!(map.ignored_points(), 1);
    }

    #[test]
    fn boundary_point_goes_to_higher_cell() {
        let map = OccupancyOctree::new(MapMode::Binary, 0.05, cube3m());
        // -1.5 is the map origin; 0.0 sits exactly on the cell-30 boundary.
        let key = map.key_of(&Point3::new(0.0, 0.0, 0.0));
        assert_eq!(key, VoxelKey::new(30, 30, 30));
    }

    #[test]
    fn roundtrip_serialization_is_byte_identical() {
        let mut map = OccupancyOctree::new(MapMode::Full, 0.05, cube3m());
        let params = DecayParams::default();
        map.insert_points(
            &[
                Point3::new(0.3, -0.2, 0.7),
                Point3::new(-1.2, 0.9, 0.0),
                Point3::new(0.0, 0.0, 0.0),
            ],
            &params,
        );
        map.decay_step(TICK, &params).unwrap();
        map.decay_step(TICK, &params).unwrap();
        let text = map.write_text();
        let parsed = OccupancyOctree::parse_text(&text).unwrap();
        assert_eq!(parsed.write_text(), text);
    }

    #[test]
    fn costs_stay_within_range_under_mixed_updates() {
        let mut map = OccupancyOctree::new(MapMode::Full, 0.05, cube3m());
        let params = DecayParams::default();
        let pts: Vec<Point3> = (0..50)
            .map(|i| Point3::new(-1.0 + 0.04 * i as f64, 0.3, -0.2))
            .collect();
        for round in 0..100 {
            if round % 3 == 0 {
                map.insert_points(&pts[(round % 5)..(10 + round % 5)], &params);
            }
            map.decay_step(TICK, &params).unwrap();
            for (_, v) in map.leaves() {
                assert!(v > 0.0 && v <= params.reset_value, "cost {v} out of range");
            }
        }
    }
}
