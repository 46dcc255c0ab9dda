use crate::error::{Error, Result};

use super::Point3;

/// Kd-tree over a fixed point set answering k-nearest-neighbor and radius
/// queries. Results are ordered by distance; exact ties are broken by the
/// lower point index so queries are fully deterministic.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    points: Vec<Point3>,
    // Tree nodes in build order; `order` holds point indices, each node owns
    // the median element of its subtree slice.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    // Index into `order` of the splitting point.
    point: usize,
    axis: usize,
    left: Option<u32>,
    right: Option<u32>,
}

impl NeighborIndex {
    /// Builds an index over `points`. An empty set is allowed; queries on it
    /// return [`Error::EmptyIndex`].
    pub fn build(points: Vec<Point3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_recursive(&points, &mut order, &mut nodes, 0, points.len(), 0);
        debug_assert!(points.is_empty() || root == Some(0));
        Self {
            points,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &Point3 {
        &self.points[index]
    }

    /// Indices of the `k` nearest points to `query`, ordered by distance
    /// (ties by lower index). Returns fewer than `k` when the set is smaller.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<Vec<usize>> {
        if self.points.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut best = BoundedHeap::new(k);
        self.search(0, query, &mut best);
        Ok(best.into_sorted())
    }

    /// Indices of all points within `radius` (inclusive) of `query`, ordered
    /// by distance (ties by lower index).
    pub fn within_radius(&self, query: &Point3, radius: f64) -> Vec<usize> {
        let mut hits: Vec<(f64, usize)> = Vec::new();
        if !self.points.is_empty() && radius >= 0.0 {
            self.collect_radius(0, query, radius * radius, &mut hits);
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.into_iter().map(|(_, i)| i).collect()
    }

    fn search(&self, node: u32, query: &Point3, best: &mut BoundedHeap) {
        let n = self.nodes[node as usize];
        let idx = self.order[n.point];
        let p = &self.points[idx];
        best.offer((p - query).norm_squared(), idx);

        let delta = query[n.axis] - p[n.axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.search(c, query, best);
        }
        // The far side can still hold an equal-distance, lower-index point,
        // so only prune on a strictly larger plane distance.
        if let Some(c) = far {
            if delta * delta <= best.prune_bound() {
                self.search(c, query, best);
            }
        }
    }

    fn collect_radius(&self, node: u32, query: &Point3, r2: f64, hits: &mut Vec<(f64, usize)>) {
        let n = self.nodes[node as usize];
        let idx = self.order[n.point];
        let p = &self.points[idx];
        let d2 = (p - query).norm_squared();
        if d2 <= r2 {
            hits.push((d2, idx));
        }
        let delta = query[n.axis] - p[n.axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.collect_radius(c, query, r2, hits);
        }
        if let Some(c) = far {
            if delta * delta <= r2 {
                self.collect_radius(c, query, r2, hits);
            }
        }
    }
}

fn build_recursive(
    points: &[Point3],
    order: &mut [usize],
    nodes: &mut Vec<Node>,
    lo: usize,
    hi: usize,
    depth: usize,
) -> Option<u32> {
    if lo >= hi {
        return None;
    }
    let axis = depth % 3;
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let id = nodes.len() as u32;
    nodes.push(Node {
        point: mid,
        axis,
        left: None,
        right: None,
    });
    let left = build_recursive(points, order, nodes, lo, mid, depth + 1);
    let right = build_recursive(points, order, nodes, mid + 1, hi, depth + 1);
    nodes[id as usize].left = left;
    nodes[id as usize].right = right;
    Some(id)
}

/// Fixed-capacity max-heap of `(distance², index)` keeping the k best
/// candidates under lexicographic (distance, index) order.
struct BoundedHeap {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl BoundedHeap {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, d2: f64, idx: usize) {
        if self.items.len() < self.k {
            self.items.push((d2, idx));
            if self.items.len() == self.k {
                self.items
                    .sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
            }
            return;
        }
        let worst = self.items[0];
        if d2 < worst.0 || (d2 == worst.0 && idx < worst.1) {
            self.items[0] = (d2, idx);
            // Restore descending order; k stays small (tens), so a sort
            // beats maintaining a real heap here.
            self.items
                .sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        }
    }

    /// Squared distance at or beyond which a subtree cannot improve the set.
    fn prune_bound(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[0].0
        }
    }

    fn into_sorted(mut self) -> Vec<usize> {
        self.items
            .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.items.into_iter().map(|(_, i)| i).collect()
    }
}
