use std::collections::HashMap;

use crate::geometry::{NeighborIndex, Point3};

use super::PointCloud;

/// Keeps points within `max_range` (inclusive) of `center`, where `center`
/// is the robot base position expressed in the cloud's own frame.
pub fn range_filter(cloud: &PointCloud, center: &Point3, max_range: f64) -> PointCloud {
    PointCloud {
        frame: cloud.frame.clone(),
        timestamp: cloud.timestamp,
        points: cloud
            .points
            .iter()
            .filter(|p| (*p - center).norm() <= max_range)
            .copied()
            .collect(),
    }
}

/// Statistical outlier removal: for each point, the mean distance to its `k`
/// nearest neighbors is computed; points whose mean exceeds the global mean
/// by more than `std_mult` standard deviations are dropped. Clouds with at
/// most `k` points pass through unchanged.
pub fn statistical_outlier_removal(cloud: &PointCloud, k: usize, std_mult: f64) -> PointCloud {
    let n = cloud.points.len();
    if n <= k || k == 0 {
        return cloud.clone();
    }
    let index = NeighborIndex::build(cloud.points.clone());
    let mut mean_dists = Vec::with_capacity(n);
    for p in &cloud.points {
        // k+1 nearest includes the query point itself at distance zero.
        let neighbors = index.knn(p, k + 1).expect("index is non-empty");
        let sum: f64 = neighbors
            .iter()
            .map(|&i| (index.point(i) - p).norm())
            .sum();
        mean_dists.push(sum / k as f64);
    }
    let mean: f64 = mean_dists.iter().sum::<f64>() / n as f64;
    let var: f64 = mean_dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
    let threshold = mean + std_mult * var.sqrt();
    PointCloud {
        frame: cloud.frame.clone(),
        timestamp: cloud.timestamp,
        points: cloud
            .points
            .iter()
            .zip(&mean_dists)
            .filter(|(_, d)| **d <= threshold)
            .map(|(p, _)| *p)
            .collect(),
    }
}

/// Voxel grid downsampling: replaces all points falling in the same cubic
/// cell of side `leaf` with their centroid. Output is sorted by cell key, so
/// equal inputs produce identical outputs.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> PointCloud {
    assert!(leaf > 0.0, "leaf size must be positive");
    type CellSum = (f64, f64, f64, usize);
    let mut cells: HashMap<(i32, i32, i32), CellSum> = HashMap::new();
    for p in &cloud.points {
        let key = (
            (p.x / leaf).floor() as i32,
            (p.y / leaf).floor() as i32,
            (p.z / leaf).floor() as i32,
        );
        let e = cells.entry(key).or_insert((0.0, 0.0, 0.0, 0));
        e.0 += p.x;
        e.1 += p.y;
        e.2 += p.z;
        e.3 += 1;
    }
    let mut entries: Vec<_> = cells.into_iter().collect();
    entries.sort_by_key(|(k, _)| *k);
    PointCloud {
        frame: cloud.frame.clone(),
        timestamp: cloud.timestamp,
        points: entries
            .into_iter()
            .map(|(_, (x, y, z, c))| Point3::new(x / c as f64, y / c as f64, z / c as f64))
            .collect(),
    }
}
