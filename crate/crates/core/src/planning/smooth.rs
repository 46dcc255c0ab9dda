use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::Point3;
use crate::robot::{end_effector_pose, JointConfig, KinematicChain, VoxelObstacles};

use super::rrt::CollisionWorld;
use super::{PlannerConfig, TrajectoryPlan};

/// Collinear resampling of the segment `a -> b` at joint-space spacing at
/// most `step`; returns the interior configs plus `b` itself (exactly).
fn resample(a: &JointConfig, b: &JointConfig, step: f64) -> Vec<JointConfig> {
    let pieces = ((a.distance(b) / step).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(pieces);
    for i in 1..pieces {
        out.push(a.lerp(b, i as f64 / pieces as f64));
    }
    out.push(*b);
    out
}

fn section_length<T, F: Fn(&T, &T) -> f64>(items: &[T], dist: F) -> f64 {
    items.windows(2).map(|w| dist(&w[0], &w[1])).sum()
}

/// Iterative shortcutting: repeatedly tries to replace a random section of
/// the waypoint list with a straight joint-space segment, accepting only
/// shortcuts that shorten the joint path, never lengthen the end-effector
/// polyline, and pass collision checks over exactly the edges that will
/// end up in the plan. Endpoints are preserved; the replacement segment is
/// resampled to the extend-step resolution so the polyline keeps following
/// the swept path. Returns the smoothed plan with its modeled optimization
/// seconds filled in.
pub(crate) fn smooth_with(
    plan: &TrajectoryPlan,
    voxels: &VoxelObstacles,
    chain: &KinematicChain,
    config: &PlannerConfig,
    seed: u64,
) -> Result<TrajectoryPlan> {
    let mut waypoints = plan.waypoints.clone();
    let mut polyline = plan.polyline.clone();
    let mut world = CollisionWorld::new(chain, voxels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..config.shortcut_attempts {
        let n = waypoints.len();
        if n < 3 {
            break;
        }
        let i = rng.gen_range(0..n - 2);
        let j = rng.gen_range(i + 2..n);
        let (a, b) = (waypoints[i], waypoints[j]);

        let old_joint = section_length(&waypoints[i..=j], |x: &JointConfig, y| x.distance(y));
        if a.distance(&b) >= old_joint - 1e-12 {
            continue;
        }
        let replacement = resample(&a, &b, config.extend_step);
        let mut new_points = Vec::with_capacity(replacement.len());
        for q in &replacement[..replacement.len() - 1] {
            new_points.push(Point3::from(end_effector_pose(chain, q)?.translation));
        }
        let old_poly = section_length(&polyline[i..=j], |x: &Point3, y| (y - x).norm());
        let mut new_poly = 0.0;
        let mut prev_pt = polyline[i];
        for p in new_points.iter().chain([&polyline[j]]) {
            new_poly += (p - prev_pt).norm();
            prev_pt = *p;
        }
        if new_poly > old_poly {
            continue;
        }

        let mut prev = a;
        let mut valid = true;
        for q in &replacement {
            if !world.edge_free(&prev, q, config.check_resolution()) {
                valid = false;
                break;
            }
            prev = *q;
        }
        if !valid {
            continue;
        }

        let interior = replacement.len() - 1;
        waypoints.splice(i + 1..j, replacement[..interior].iter().copied());
        polyline.splice(i + 1..j, new_points);
    }

    Ok(TrajectoryPlan {
        cost: section_length(&polyline, |x: &Point3, y| (y - x).norm()),
        waypoints,
        polyline,
        planning_time: plan.planning_time,
        optimization_time: world.checks as f64 / config.modeled_check_rate,
    })
}
