//! Two-layer manipulator motion planning over time-decaying voxel danger maps.

pub mod behavior;
pub mod error;
pub mod geometry;
pub mod occupancy;
pub mod perception;
pub mod planning;
pub mod robot;
pub mod sim;

pub use behavior::{
    assess_risk, estimate_obstacle, event_line, reflexive_maneuver, Arbiter, Directive, Mode,
    ObstacleEstimate, ObstacleTracker, ReflexParams, RiskAssessment,
};
pub use error::{Error, Result};
pub use geometry::{
    ray_cast, voxel_traversal, Aabb, NeighborIndex, Point3, Ray, RigidTransform, Segment3, Shape,
    Vector3, VoxelKey,
};
pub use occupancy::{decay_time, DecayParams, MapMode, OccupancyOctree};
pub use perception::{
    icp_refine, merge_clouds, range_filter, simulate_depth_frame, statistical_outlier_removal,
    voxel_downsample, CameraModel, PointCloud,
};
pub use planning::{
    audit_plan, evaluate_cost, plan_predictive, plan_reactive, rrt_connect, smooth,
    PlannerConfig, TrajectoryPlan,
};
pub use robot::{
    end_effector_pose, forward_kinematics, link_cylinders, reach_pose, remove_robot_points,
    CylinderModel, JointConfig, KinematicChain, VoxelObstacles,
};
pub use sim::{
    run_closed_loop, run_danger_map_test, run_experiment_suite, Scenario, SimOptions, SimOutput,
    Variant,
};

/// Derives an independent per-task seed from a base seed and a salt so
/// parallel runs never share random streams.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
