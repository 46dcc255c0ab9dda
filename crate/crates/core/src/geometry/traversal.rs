use serde::{Deserialize, Serialize};

use super::{Point3, Segment3};

/// Integer coordinate of a voxel on the map lattice.
///
/// A point maps to the cell `floor((p - origin) / voxel_size)` per axis, so
/// each cell covers the half-open cube `[c*s, (c+1)*s)` and points exactly on
/// a boundary belong to the higher-index cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelKey {
    pub i: i32,
    pub j: i32,
    pub k: i32,
}

impl VoxelKey {
    pub fn new(i: i32, j: i32, k: i32) -> Self {
        Self { i, j, k }
    }

    /// Center of the cell in world coordinates.
    pub fn center(&self, voxel_size: f64, origin: &Point3) -> Point3 {
        Point3::new(
            origin.x + (self.i as f64 + 0.5) * voxel_size,
            origin.y + (self.j as f64 + 0.5) * voxel_size,
            origin.z + (self.k as f64 + 0.5) * voxel_size,
        )
    }

    /// Lower corner of the cell in world coordinates.
    pub fn min_corner(&self, voxel_size: f64, origin: &Point3) -> Point3 {
        Point3::new(
            origin.x + self.i as f64 * voxel_size,
            origin.y + self.j as f64 * voxel_size,
            origin.z + self.k as f64 * voxel_size,
        )
    }
}

/// Cell containing `p` on a lattice of `voxel_size` anchored at `origin`.
pub fn voxel_key_of(p: &Point3, voxel_size: f64, origin: &Point3) -> VoxelKey {
    VoxelKey {
        i: ((p.x - origin.x) / voxel_size).floor() as i32,
        j: ((p.y - origin.y) / voxel_size).floor() as i32,
        k: ((p.z - origin.z) / voxel_size).floor() as i32,
    }
}

/// Walks `seg` through the voxel lattice and returns every traversed cell
/// with the chord length of the segment inside it, in traversal order.
///
/// The walk advances one face at a time (3-D DDA), so consecutive keys differ
/// in exactly one axis and the chord lengths telescope: they sum to the
/// segment length exactly up to floating point rounding. A zero-length
/// segment yields its containing cell with distance 0.
pub fn voxel_traversal(seg: &Segment3, voxel_size: f64, origin: &Point3) -> Vec<(VoxelKey, f64)> {
    assert!(voxel_size > 0.0, "voxel size must be positive");
    let len = seg.length();
    let mut cell = voxel_key_of(&seg.start, voxel_size, origin);
    if len == 0.0 {
        return vec![(cell, 0.0)];
    }
    let dir = (seg.end - seg.start) / len;
    let end_cell = voxel_key_of(&seg.end, voxel_size, origin);

    // Per axis: step direction, distance along the segment to the next cell
    // boundary (t_max) and between successive boundaries (t_delta).
    let mut step = [0i32; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let cell_idx = [cell.i, cell.j, cell.k];
    for a in 0..3 {
        if dir[a] > 0.0 {
            step[a] = 1;
            let boundary = origin[a] + (cell_idx[a] + 1) as f64 * voxel_size;
            t_max[a] = (boundary - seg.start[a]) / dir[a];
            t_delta[a] = voxel_size / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            // Lower boundary of the current cell; a start exactly on it
            // belongs to this cell, so the first crossing is at distance 0.
            let boundary = origin[a] + cell_idx[a] as f64 * voxel_size;
            t_max[a] = (boundary - seg.start[a]) / dir[a];
            t_delta[a] = voxel_size / -dir[a];
        }
    }

    let manhattan = (end_cell.i - cell.i).unsigned_abs()
        + (end_cell.j - cell.j).unsigned_abs()
        + (end_cell.k - cell.k).unsigned_abs();
    let mut out = Vec::with_capacity(manhattan as usize + 1);
    let mut t = 0.0;
    // Bound the walk defensively; rounding at the tail is handled by the
    // `len` checks below.
    for _ in 0..=(manhattan + 3) {
        let axis = (0..3).fold(0, |m, a| if t_max[a] < t_max[m] { a } else { m });
        let t_next = t_max[axis];
        if cell == end_cell || t_next >= len {
            out.push((cell, len - t));
            return out;
        }
        out.push((cell, t_next - t));
        t = t_next;
        match axis {
            0 => cell.i += step[0],
            1 => cell.j += step[1],
            _ => cell.k += step[2],
        }
        t_max[axis] += t_delta[axis];
    }
    // Rounding pushed the walk past the expected cell count; close out at
    // the current cell so chord lengths still telescope to `len`.
    out.push((cell, len - t));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Segment3;

    fn origin() -> Point3 {
        Point3::new(0.0, 0.0, 0.0)
    }

    #[test]
    fn key_uses_floor_per_axis() {
        let k = voxel_key_of(&Point3::new(0.26, -0.01, 0.0), 0.05, &origin());
        assert_eq!(k, VoxelKey::new(5, -1, 0));
    }

    #[test]
    fn boundary_point_belongs_to_higher_cell() {
        let k = voxel_key_of(&Point3::new(0.05, 0.0, 0.0), 0.05, &origin());
        assert_eq!(k, VoxelKey::new(1, 0, 0));
    }

    #[test]
    fn segment_inside_one_voxel() {
        let seg = Segment3::new(Point3::new(0.01, 0.01, 0.01), Point3::new(0.04, 0.01, 0.01));
        let cells = voxel_traversal(&seg, 0.05, &origin());
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].0, VoxelKey::new(0, 0, 0));
        assert!((cells[0].1 - 0.03).abs() < 1e-12);
    }

    #[test]
    fn segment_crossing_one_boundary_splits_lengths() {
        let seg = Segment3::new(
            Point3::new(0.01, 0.025, 0.025),
            Point3::new(0.09, 0.025, 0.025),
        );
        let cells = voxel_traversal(&seg, 0.05, &origin());
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].0, VoxelKey::new(0, 0, 0));
        assert_eq!(cells[1].0, VoxelKey::new(1, 0, 0));
        assert!((cells[0].1 - 0.04).abs() < 1e-12);
        assert!((cells[1].1 - 0.04).abs() < 1e-12);
    }

    #[test]
    fn zero_length_segment_yields_single_cell() {
        let p = Point3::new(0.12, 0.12, 0.12);
        let cells = voxel_traversal(&Segment3::new(p, p), 0.05, &origin());
        assert_eq!(cells, vec![(VoxelKey::new(2, 2, 2), 0.0)]);
    }

    #[test]
    fn chords_sum_to_length_on_diagonal() {
        let seg = Segment3::new(
            Point3::new(-0.131, 0.02, 0.73),
            Point3::new(0.911, -0.44, 0.08),
        );
        let cells = voxel_traversal(&seg, 0.05, &origin());
        let total: f64 = cells.iter().map(|c| c.1).sum();
        assert!((total - seg.length()).abs() < 1e-9);
        for w in cells.windows(2) {
            let d = (w[0].0.i - w[1].0.i).abs() + (w[0].0.j - w[1].0.j).abs()
                + (w[0].0.k - w[1].0.k).abs();
            assert_eq!(d, 1, "consecutive cells must be face neighbors");
        }
    }

    #[test]
    fn negative_direction_start_on_boundary() {
        // Start exactly on x = 0.05 moving -x: the start belongs to cell 1,
        // which contributes a zero-length chord.
        let seg = Segment3::new(
            Point3::new(0.05, 0.01, 0.01),
            Point3::new(0.02, 0.01, 0.01),
        );
        let cells = voxel_traversal(&seg, 0.05, &origin());
        let total: f64 = cells.iter().map(|c| c.1).sum();
        assert!((total - 0.03).abs() < 1e-12);
        assert_eq!(cells.last().unwrap().0, VoxelKey::new(0, 0, 0));
        assert_eq!(cells[0].0, VoxelKey::new(1, 0, 0));
        assert_eq!(cells[0].1, 0.0);
    }
}
