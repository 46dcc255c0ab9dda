//! Joint-space RRT-Connect planning with shortcut smoothing, danger-weighted
//! trajectory cost, and candidate selection for the predictive and reactive
//! planner variants.

mod rrt;
mod smooth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{voxel_traversal, Point3, Segment3};
use crate::occupancy::OccupancyOctree;
use crate::robot::{end_effector_pose, JointConfig, KinematicChain, VoxelObstacles};

pub(crate) use rrt::CollisionWorld;
use rrt::rrt_connect_paths;
use smooth::smooth_with;

/// Planner parameters. Work is budgeted deterministically: one modeled
/// planning second equals `modeled_check_rate` collision checks, so equal
/// seeds and inputs reproduce identical plans and reported times regardless
/// of machine load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Modeled planning budget per attempt in seconds.
    pub max_planning_time: f64,
    /// Sequential budgets tried before planning fails.
    pub attempts: usize,
    /// Tree extension step in radians (joint-space norm).
    pub extend_step: f64,
    /// Probability of sampling the opposite tree root instead of uniform.
    pub goal_bias: f64,
    pub seed: u64,
    /// Cap on candidate paths collected per attempt.
    pub max_candidates: usize,
    /// Shortcut tries per smoothing pass.
    pub shortcut_attempts: usize,
    /// Collision checks per modeled planning second.
    pub modeled_check_rate: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_planning_time: 1.0,
            attempts: 3,
            extend_step: 0.1,
            goal_bias: 0.05,
            seed: 0,
            max_candidates: 10,
            shortcut_attempts: 200,
            modeled_check_rate: 50_000.0,
        }
    }
}

impl PlannerConfig {
    /// Interpolation spacing for edge validation and plan audits.
    pub fn check_resolution(&self) -> f64 {
        self.extend_step / 5.0
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Joint-space path with its end-effector polyline, selection cost and
/// modeled time accounting. Plans hold at least two waypoints except for
/// the degenerate equal start/goal case, which holds one.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPlan {
    pub waypoints: Vec<JointConfig>,
    /// End-effector position at each waypoint.
    pub polyline: Vec<Point3>,
    /// Selection cost: danger-weighted traversal cost for predictive plans,
    /// plain polyline length otherwise. Never below the polyline length.
    pub cost: f64,
    /// Modeled seconds spent growing trees.
    pub planning_time: f64,
    /// Modeled seconds spent smoothing and evaluating.
    pub optimization_time: f64,
}

impl TrajectoryPlan {
    /// Builds a plan from waypoints, deriving the polyline through forward
    /// kinematics; the cost starts out as the polyline length.
    pub fn from_waypoints(
        chain: &KinematicChain,
        waypoints: Vec<JointConfig>,
        planning_time: f64,
    ) -> Result<Self> {
        let mut polyline = Vec::with_capacity(waypoints.len());
        for q in &waypoints {
            polyline.push(Point3::from(end_effector_pose(chain, q)?.translation));
        }
        let mut plan = Self {
            waypoints,
            polyline,
            cost: 0.0,
            planning_time,
            optimization_time: 0.0,
        };
        plan.cost = plan.polyline_length();
        Ok(plan)
    }

    pub fn polyline_length(&self) -> f64 {
        self.polyline.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn joint_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| w[0].distance(&w[1]))
            .sum()
    }

    /// One waypoint per line (six joint values), then cost and modeled time
    /// footers. Stable formatting for golden-file comparisons.
    pub fn write_text(&self) -> String {
        let mut out = String::new();
        for q in &self.waypoints {
            let vals: Vec<String> = q.0.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out.push_str(&format!("cost {:.6}\n", self.cost));
        out.push_str(&format!("plan_time {:.6}\n", self.planning_time));
        out.push_str(&format!("optim_time {:.6}\n", self.optimization_time));
        out
    }

    /// Parses the text form, rebuilding the polyline through the chain.
    pub fn parse_text(text: &str, chain: &KinematicChain) -> Result<Self> {
        let mut waypoints = Vec::new();
        let mut cost = None;
        let mut plan_time = None;
        let mut optim_time = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let field = |rest: &str| -> Result<f64> {
                rest.trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad number in plan: {e}")))
            };
            if let Some(rest) = line.strip_prefix("cost ") {
                cost = Some(field(rest)?);
            } else if let Some(rest) = line.strip_prefix("plan_time ") {
                plan_time = Some(field(rest)?);
            } else if let Some(rest) = line.strip_prefix("optim_time ") {
                optim_time = Some(field(rest)?);
            } else {
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse(format!("bad waypoint line: {e}")))?;
                if vals.len() != 6 {
                    return Err(Error::Parse(format!(
                        "waypoint line has {} values, expected 6",
                        vals.len()
                    )));
                }
                waypoints.push(JointConfig([
                    vals[0], vals[1], vals[2], vals[3], vals[4], vals[5],
                ]));
            }
        }
        if waypoints.is_empty() {
            return Err(Error::Parse("plan has no waypoints".into()));
        }
        let mut plan = Self::from_waypoints(chain, waypoints, plan_time.unwrap_or(0.0))?;
        plan.optimization_time = optim_time.unwrap_or(0.0);
        if let Some(c) = cost {
            plan.cost = c;
        }
        Ok(plan)
    }
}

fn obstacle_view(map: &OccupancyOctree) -> VoxelObstacles {
    VoxelObstacles::new(&map.occupied(), map.resolution(), map.origin())
}

/// Raw bidirectional RRT-Connect: returns every path found within the
/// deterministic work budget, unsmoothed, each stamped with the modeled
/// planning seconds the whole call consumed.
pub fn rrt_connect(
    start: &JointConfig,
    goal: &JointConfig,
    obstacles: &OccupancyOctree,
    chain: &KinematicChain,
    config: &PlannerConfig,
) -> Result<Vec<TrajectoryPlan>> {
    let voxels = obstacle_view(obstacles);
    let (paths, planning_time) = rrt_connect_paths(start, goal, chain, &voxels, config)?;
    paths
        .into_iter()
        .map(|w| TrajectoryPlan::from_waypoints(chain, w, planning_time))
        .collect()
}

/// Shortcut smoothing against the binary obstacle map; see the module
/// internals for the acceptance rules.
pub fn smooth(
    plan: &TrajectoryPlan,
    obstacles: &OccupancyOctree,
    chain: &KinematicChain,
    config: &PlannerConfig,
) -> Result<TrajectoryPlan> {
    smooth_with(plan, &obstacle_view(obstacles), chain, config, config.seed)
}

/// Danger-weighted trajectory cost: every voxel chord of the end-effector
/// polyline contributes its length plus length times the voxel cost, so an
/// all-zero map reduces the cost to the polyline length.
pub fn evaluate_cost(plan: &TrajectoryPlan, danger: &OccupancyOctree) -> f64 {
    let mut total = 0.0;
    for w in plan.polyline.windows(2) {
        for (key, chord) in voxel_traversal(
            &Segment3::new(w[0], w[1]),
            danger.resolution(),
            danger.origin(),
        ) {
            total += chord + chord * danger.cost_at(&key);
        }
    }
    total
}

/// Independent post-hoc validity audit: re-checks the whole body along a
/// dense interpolation of every edge of the final plan.
pub fn audit_plan(
    plan: &TrajectoryPlan,
    obstacles: &OccupancyOctree,
    chain: &KinematicChain,
    config: &PlannerConfig,
) -> bool {
    let voxels = obstacle_view(obstacles);
    let mut world = CollisionWorld::new(chain, &voxels);
    let Some(first) = plan.waypoints.first() else {
        return false;
    };
    if !world.is_free(first) {
        return false;
    }
    plan.waypoints
        .windows(2)
        .all(|w| world.edge_free(&w[0], &w[1], config.check_resolution()))
}

/// Candidate order: lowest cost, then shortest polyline, then earliest.
fn better(cost: f64, len: f64, idx: usize, best: &(f64, f64, usize)) -> bool {
    cost < best.0
        || (cost == best.0 && (len < best.1 || (len == best.1 && idx < best.2)))
}

fn plan_with_selection(
    start: &JointConfig,
    goal: &JointConfig,
    obstacles: &OccupancyOctree,
    danger: Option<&OccupancyOctree>,
    chain: &KinematicChain,
    config: &PlannerConfig,
) -> Result<TrajectoryPlan> {
    let voxels = obstacle_view(obstacles);
    let (paths, planning_time) = rrt_connect_paths(start, goal, chain, &voxels, config)?;
    let mut optimization_time = 0.0;
    let mut best: Option<(f64, f64, usize, TrajectoryPlan)> = None;
    for (idx, waypoints) in paths.into_iter().enumerate() {
        let raw = TrajectoryPlan::from_waypoints(chain, waypoints, planning_time)?;
        let mut candidate = smooth_with(
            &raw,
            &voxels,
            chain,
            config,
            crate::mix_seed(config.seed, idx as u64 + 1),
        )?;
        optimization_time += candidate.optimization_time;
        let len = candidate.polyline_length();
        let cost = match danger {
            Some(map) => evaluate_cost(&candidate, map),
            None => len,
        };
        candidate.cost = cost;
        let key = (cost, len, idx);
        if best.as_ref().is_none_or(|(c, l, i, _)| better(cost, len, idx, &(*c, *l, *i))) {
            best = Some((key.0, key.1, key.2, candidate));
        }
    }
    let (_, _, _, mut plan) = best.expect("rrt_connect_paths returns at least one path");
    plan.planning_time = planning_time;
    plan.optimization_time = optimization_time;
    Ok(plan)
}

/// Predictive planner: hard constraints from the binary occupied set only,
/// then the smoothed candidate with the lowest danger-weighted cost wins.
pub fn plan_predictive(
    start: &JointConfig,
    goal: &JointConfig,
    obstacles: &OccupancyOctree,
    danger: &OccupancyOctree,
    chain: &KinematicChain,
    config: &PlannerConfig,
) -> Result<TrajectoryPlan> {
    plan_with_selection(start, goal, obstacles, Some(danger), chain, config)
}

/// Reactive baseline: identical pipeline, but candidates are judged by
/// polyline length alone.
pub fn plan_reactive(
    start: &JointConfig,
    goal: &JointConfig,
    obstacles: &OccupancyOctree,
    chain: &KinematicChain,
    config: &PlannerConfig,
) -> Result<TrajectoryPlan> {
    plan_with_selection(start, goal, obstacles, None, chain, config)
}
