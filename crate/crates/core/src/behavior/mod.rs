//! Two-layer behavior arbitration: obstacle tracking from map snapshots,
//! braking-distance risk assessment, the reflexive/predictive switch, and
//! escape maneuvers (backtracking or moving against the approach vector).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, Vector3};
use crate::occupancy::OccupancyOctree;
use crate::planning::{CollisionWorld, PlannerConfig};
use crate::robot::{end_effector_pose, reach_pose, JointConfig, KinematicChain, VoxelObstacles};

/// Reflexive layer tuning. The risk value compares obstacle speed against
/// clearance; `gamma` sets how much clearance buys down a given speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReflexParams {
    pub gamma: f64,
    /// Risk at or above this switches to the reflexive layer.
    pub threshold: f64,
    /// Portion of the executed arc to retrace when backtracking.
    pub backtrack_fraction: f64,
    /// Escape translation in meters along the inverted approach vector.
    pub escape_step: f64,
    /// The escape target is clipped to this sphere around the base.
    pub workspace_radius: f64,
    /// Exponential smoothing factor for the velocity estimate.
    pub velocity_smoothing: f64,
}

impl Default for ReflexParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            threshold: 1.0,
            backtrack_fraction: 0.10,
            escape_step: 0.20,
            workspace_radius: 0.85,
            velocity_smoothing: 0.5,
        }
    }
}

/// Closest obstacle point, clearance, and smoothed velocity at a timestamp.
/// An empty map reports infinite distance and zero velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleEstimate {
    pub closest_point: Point3,
    pub distance: f64,
    pub velocity: Vector3,
    pub timestamp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Predictive,
    Reflexive,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Predictive => write!(f, "predictive"),
            Mode::Reflexive => write!(f, "reflexive"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskAssessment {
    pub value: f64,
    pub mode: Mode,
}

/// Incremental tracker: whole-body closest point per frame, velocity from
/// the closest-point finite difference with exponential smoothing.
#[derive(Clone, Debug)]
pub struct ObstacleTracker {
    smoothing: f64,
    last: Option<(Point3, f64)>,
    velocity: Vector3,
}

impl ObstacleTracker {
    pub fn new(smoothing: f64) -> Self {
        Self {
            smoothing,
            last: None,
            velocity: Vector3::zeros(),
        }
    }

    pub fn update(
        &mut self,
        map: &OccupancyOctree,
        chain: &KinematicChain,
        q: &JointConfig,
        timestamp: f64,
    ) -> Result<ObstacleEstimate> {
        let cylinders = crate::robot::link_cylinders(chain, q, 0.0)?;
        let voxels = VoxelObstacles::new(&map.occupied(), map.resolution(), map.origin());
        let (distance, obstacle, _) = voxels.min_distance(&cylinders);
        if distance.is_infinite() {
            self.last = None;
            self.velocity = Vector3::zeros();
            return Ok(ObstacleEstimate {
                closest_point: obstacle,
                distance,
                velocity: Vector3::zeros(),
                timestamp,
            });
        }
        if let Some((prev_point, prev_time)) = self.last {
            let dt = timestamp - prev_time;
            if dt > 0.0 {
                let raw = (obstacle - prev_point) / dt;
                self.velocity = raw * self.smoothing + self.velocity * (1.0 - self.smoothing);
            }
        }
        self.last = Some((obstacle, timestamp));
        Ok(ObstacleEstimate {
            closest_point: obstacle,
            distance,
            velocity: self.velocity,
            timestamp,
        })
    }
}

/// Replays timestamped binary snapshots through a fresh tracker and returns
/// the estimate at the newest frame.
pub fn estimate_obstacle(
    frames: &[(&OccupancyOctree, f64)],
    chain: &KinematicChain,
    q: &JointConfig,
    params: &ReflexParams,
) -> Result<ObstacleEstimate> {
    if frames.is_empty() {
        return Err(Error::Scenario("obstacle estimate needs at least one frame".into()));
    }
    let mut tracker = ObstacleTracker::new(params.velocity_smoothing);
    let mut est = None;
    for (map, t) in frames {
        est = Some(tracker.update(map, chain, q, *t)?);
    }
    Ok(est.expect("frames checked non-empty"))
}

/// Braking-distance risk: squared obstacle speed over gamma times the
/// clearance. Infinite clearance scores zero; zero clearance forces the
/// reflexive layer with an infinite score.
pub fn assess_risk(est: &ObstacleEstimate, params: &ReflexParams) -> RiskAssessment {
    let value = if est.distance.is_infinite() {
        0.0
    } else if est.distance <= 0.0 {
        f64::INFINITY
    } else {
        est.velocity.norm_squared() / (params.gamma * est.distance)
    };
    let mode = if value >= params.threshold {
        Mode::Reflexive
    } else {
        Mode::Predictive
    };
    RiskAssessment { value, mode }
}

fn escape_is_valid(
    plan: &[JointConfig],
    map: &OccupancyOctree,
    chain: &KinematicChain,
) -> bool {
    let voxels = VoxelObstacles::new(&map.occupied(), map.resolution(), map.origin());
    let mut world = CollisionWorld::new(chain, &voxels);
    let resolution = PlannerConfig::default().check_resolution();
    let Some(first) = plan.first() else {
        return false;
    };
    if !world.is_free(first) {
        return false;
    }
    plan.windows(2)
        .all(|w| world.edge_free(&w[0], &w[1], resolution))
}

/// Escape plan starting at the current configuration (the last executed
/// waypoint). First choice is retracing the tail of the executed trajectory;
/// if that tail is now blocked, the end effector moves one step against the
/// obstacle approach vector instead. Both options are collision-audited
/// against the given map; if neither survives, the robot is trapped.
pub fn reflexive_maneuver(
    executed: &[JointConfig],
    map: &OccupancyOctree,
    est: &ObstacleEstimate,
    chain: &KinematicChain,
    params: &ReflexParams,
) -> Result<Vec<JointConfig>> {
    let current = *executed.last().ok_or(Error::Scenario(
        "reflexive maneuver needs the executed trajectory".into(),
    ))?;

    // Option 1: reverse along the last `backtrack_fraction` of the arc.
    if executed.len() >= 2 {
        let arc: f64 = executed.windows(2).map(|w| w[0].distance(&w[1])).sum();
        let target_arc = arc * params.backtrack_fraction;
        let mut covered = 0.0;
        let mut cut = executed.len() - 1;
        while cut > 0 {
            covered += executed[cut].distance(&executed[cut - 1]);
            cut -= 1;
            if covered >= target_arc {
                break;
            }
        }
        let plan: Vec<JointConfig> = executed[cut..].iter().rev().copied().collect();
        if plan.len() >= 2 && escape_is_valid(&plan, map, chain) {
            return Ok(plan);
        }
    }

    // Option 2: step the end effector against the obstacle approach vector.
    let ee = end_effector_pose(chain, &current)?;
    let ee_pos = Point3::from(ee.translation);
    let toward = est.closest_point - ee_pos;
    if toward.norm() > 1e-9 {
        let away = -toward.normalize();
        let mut target_pos = ee_pos + away * params.escape_step;
        let radial = target_pos.coords.norm();
        if radial > params.workspace_radius {
            target_pos = Point3::from(target_pos.coords * (params.workspace_radius / radial));
        }
        let target = RigidTransform {
            rotation: ee.rotation,
            translation: target_pos.coords,
        };
        if let Ok(solution) = reach_pose(chain, &current, &target, 1e-3, 1e-2) {
            let plan = vec![current, solution];
            if escape_is_valid(&plan, map, chain) {
                return Ok(plan);
            }
        }
    }

    Err(Error::Trapped)
}

/// Arbitration outcome for one tick.
#[derive(Clone, Debug, PartialEq)]
pub enum Directive {
    Continue,
    /// Drop the current trajectory and execute this escape plan now.
    Preempt { escape: Vec<JointConfig> },
    /// Escape finished and risk subsided: plan fresh to the original goal.
    Replan,
}

impl Directive {
    pub fn label(&self) -> &'static str {
        match self {
            Directive::Continue => "continue",
            Directive::Preempt { .. } => "preempt",
            Directive::Replan => "replan",
        }
    }
}

/// Single decision authority on the execution path. Preemption is
/// edge-triggered: one preempt per risk crossing, then the escape runs to
/// completion before a replan is issued.
#[derive(Clone, Debug, Default)]
pub struct Arbiter {
    escaping: bool,
    prev_reflexive: bool,
}

impl Arbiter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn escaping(&self) -> bool {
        self.escaping
    }

    /// Decides the tick. `escape_active` reports whether the executor is
    /// still working through a previously issued escape plan.
    pub fn decide(
        &mut self,
        assessment: &RiskAssessment,
        escape_active: bool,
        executed: &[JointConfig],
        map: &OccupancyOctree,
        est: &ObstacleEstimate,
        chain: &KinematicChain,
        params: &ReflexParams,
    ) -> Result<Directive> {
        let reflexive = assessment.mode == Mode::Reflexive;
        let directive = if self.escaping {
            if escape_active {
                Directive::Continue
            } else if reflexive {
                // Escape finished but the obstacle is still closing: flee again.
                let escape = reflexive_maneuver(executed, map, est, chain, params)?;
                Directive::Preempt { escape }
            } else {
                self.escaping = false;
                Directive::Replan
            }
        } else if reflexive && !self.prev_reflexive {
            let escape = reflexive_maneuver(executed, map, est, chain, params)?;
            self.escaping = true;
            Directive::Preempt { escape }
        } else {
            Directive::Continue
        };
        self.prev_reflexive = reflexive;
        Ok(directive)
    }
}

/// One audit-friendly log line per tick.
pub fn event_line(t: f64, assessment: &RiskAssessment, est: &ObstacleEstimate, directive: &str) -> String {
    format!(
        "t={:.4} mode={} d_risk={:.4} d_eucl={:.4} |v|={:.4} directive={}",
        t,
        assessment.mode,
        assessment.value,
        est.distance,
        est.velocity.norm(),
        directive
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, VoxelKey};
    use crate::occupancy::MapMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binary_map(resolution: f64) -> OccupancyOctree {
        OccupancyOctree::new(
            MapMode::Binary,
            resolution,
            Aabb::from_center_size(Point3::origin(), 3.0),
        )
    }

    fn estimate(distance: f64, speed: f64) -> ObstacleEstimate {
        ObstacleEstimate {
            closest_point: Point3::origin(),
            distance,
            velocity: Vector3::new(speed, 0.0, 0.0),
            timestamp: 0.0,
        }
    }

    #[test]
    fn risk_examples_match_hand_values() {
        let params = ReflexParams::default();
        let fast = assess_risk(&estimate(0.5, 1.0), &params);
        assert!((fast.value - 1.0 / 0.75).abs() < 1e-12);
        assert_eq!(fast.mode, Mode::Reflexive);

        let slow = assess_risk(&estimate(1.0, 0.3), &params);
        assert!((slow.value - 0.06).abs() < 1e-12);
        assert_eq!(slow.mode, Mode::Predictive);

        let still = assess_risk(&estimate(0.4, 0.0), &params);
        assert_eq!(still.value, 0.0);
        assert_eq!(still.mode, Mode::Predictive);

        let empty = assess_risk(&estimate(f64::INFINITY, 2.0), &params);
        assert_eq!(empty.value, 0.0);
        let contact = assess_risk(&estimate(0.0, 0.1), &params);
        assert!(contact.value.is_infinite());
        assert_eq!(contact.mode, Mode::Reflexive);
    }

    #[test]
    fn risk_scale_laws_hold() {
        let params = ReflexParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let v = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let d = rng.gen_range(0.05..2.0);
            let s = rng.gen_range(0.1..4.0);
            let base = assess_risk(
                &ObstacleEstimate {
                    closest_point: Point3::origin(),
                    distance: d,
                    velocity: v,
                    timestamp: 0.0,
                },
                &params,
            )
            .value;
            let scaled_v = assess_risk(
                &ObstacleEstimate {
                    closest_point: Point3::origin(),
                    distance: d,
                    velocity: v * s,
                    timestamp: 0.0,
                },
                &params,
            )
            .value;
            let scaled_d = assess_risk(
                &ObstacleEstimate {
                    closest_point: Point3::origin(),
                    distance: d * s,
                    velocity: v,
                    timestamp: 0.0,
                },
                &params,
            )
            .value;
            assert!((scaled_v - s * s * base).abs() <= 1e-12 * scaled_v.max(1.0));
            assert!((scaled_d - base / s).abs() <= 1e-12 * base.max(1.0));
        }
    }

    #[test]
    fn tracker_reports_approach_speed_and_static_zero() {
        let chain = KinematicChain::ur5();
        let q = JointConfig([0.0, -1.2, 1.2, 0.0, 0.4, 0.0]);
        let params = ReflexParams::default();
        let dt = 1.0 / 15.0;
        // One voxel per frame at resolution 1/15 m: the closest face moves
        // 1/15 m per tick, a raw approach speed of 1 m/s.
        let mut frames = Vec::new();
        for k in 0..12 {
            let mut map = binary_map(1.0 / 15.0);
            map.set(&VoxelKey::new(14 - k, 26, 26), 1.0);
            frames.push((map, k as f64 * dt));
        }
        let refs: Vec<(&OccupancyOctree, f64)> = frames.iter().map(|(m, t)| (m, *t)).collect();
        let est = estimate_obstacle(&refs, &chain, &q, &params).unwrap();
        assert!(
            (est.velocity.norm() - 1.0).abs() < 2e-2,
            "smoothed speed {}",
            est.velocity.norm()
        );
        assert!(est.velocity.x < 0.0, "moving toward the robot along -x");

        // A static obstacle never builds velocity.
        let mut map = binary_map(1.0 / 15.0);
        map.set(&VoxelKey::new(14, 26, 26), 1.0);
        let stat = estimate_obstacle(&[(&map, 0.0), (&map, dt), (&map, 2.0 * dt)], &chain, &q, &params)
            .unwrap();
        assert_eq!(stat.velocity.norm(), 0.0);
        assert!(stat.distance > 0.0 && stat.distance.is_finite());

        // Empty map: infinite distance sentinel, zero velocity.
        let empty = binary_map(0.05);
        let e = estimate_obstacle(&[(&empty, 0.0)], &chain, &q, &params).unwrap();
        assert!(e.distance.is_infinite());
        assert_eq!(e.velocity.norm(), 0.0);
    }

    #[test]
    fn first_observation_has_zero_velocity() {
        let chain = KinematicChain::ur5();
        let q = JointConfig([0.0, -1.2, 1.2, 0.0, 0.4, 0.0]);
        let mut map = binary_map(0.05);
        map.set(&VoxelKey::new(40, 35, 30), 1.0);
        let mut tracker = ObstacleTracker::new(0.5);
        let est = tracker.update(&map, &chain, &q, 0.0).unwrap();
        assert_eq!(est.velocity.norm(), 0.0);
    }

    fn executed_line(chain: &KinematicChain) -> Vec<JointConfig> {
        let a = JointConfig([0.0, -1.2, 1.2, 0.0, 0.4, 0.0]);
        let b = JointConfig([0.9, -0.9, 0.9, 0.3, 0.1, 0.3]);
        let mut path = vec![a];
        loop {
            let last = *path.last().unwrap();
            if last == b {
                break;
            }
            path.push(last.step_toward(&b, 0.1));
        }
        let _ = chain;
        path
    }

    #[test]
    fn backtrack_returns_reversed_suffix_covering_a_tenth() {
        let chain = KinematicChain::ur5();
        let executed = executed_line(&chain);
        let map = binary_map(0.05);
        let est = estimate(0.3, 1.0);
        let params = ReflexParams::default();
        let plan = reflexive_maneuver(&executed, &map, &est, &chain, &params).unwrap();
        assert!(plan.len() >= 2);
        assert_eq!(plan[0], *executed.last().unwrap());
        // Reversed suffix of the executed list.
        let n = plan.len();
        for (i, q) in plan.iter().enumerate() {
            assert_eq!(*q, executed[executed.len() - 1 - i], "waypoint {i}");
        }
        let arc: f64 = executed.windows(2).map(|w| w[0].distance(&w[1])).sum();
        let covered: f64 = plan.windows(2).map(|w| w[0].distance(&w[1])).sum();
        assert!(covered >= 0.10 * arc - 1e-12);
        assert!(covered <= 0.10 * arc + 0.1 + 1e-12, "minimal suffix only");
        let _ = n;
    }

    #[test]
    fn blocked_backtrack_escapes_against_approach_vector() {
        let chain = KinematicChain::ur5();
        // Executed trajectory: a long base sweep ending at phi = 0, so the
        // backtrack suffix retraces the arc to phi = -0.4.
        let pose_at = |phi: f64| JointConfig([phi, -1.2, 1.2, 0.0, 0.4, 0.0]);
        let executed: Vec<JointConfig> =
            (0..=12).map(|k| pose_at(-2.4 + 0.2 * k as f64)).collect();
        let current = *executed.last().unwrap();

        // The obstacle now occupies the far end of that suffix: the current
        // body stays clear, but the backtrack edge runs straight into it.
        let mut map = binary_map(0.02);
        let old_ee = end_effector_pose(&chain, &pose_at(-0.4)).unwrap().translation;
        let key = map.key_of(&Point3::from(old_ee));
        map.set(&key, 1.0);
        let obstacle = key.center(map.resolution(), map.origin());

        let ee = end_effector_pose(&chain, &current).unwrap();
        let ee_pos = Point3::from(ee.translation);
        let est = ObstacleEstimate {
            closest_point: obstacle,
            distance: 0.08,
            velocity: (ee_pos - obstacle).normalize() * 1.2,
            timestamp: 0.0,
        };
        let params = ReflexParams::default();
        let plan = reflexive_maneuver(&executed, &map, &est, &chain, &params).unwrap();
        assert_eq!(plan.len(), 2, "backtrack blocked, escape step taken");
        assert_eq!(plan[0], current);
        let new_ee = end_effector_pose(&chain, &plan[1]).unwrap();
        let moved = Point3::from(new_ee.translation) - ee_pos;
        assert!(moved.norm() > 0.05, "escape actually moves the end effector");
        assert!(
            moved.dot(&(obstacle - ee_pos)) < 0.0,
            "escape direction opposes the obstacle"
        );
        assert!(Point3::from(new_ee.translation).coords.norm() <= params.workspace_radius + 1e-6);
    }

    #[test]
    fn fully_blocked_robot_reports_trapped() {
        let chain = KinematicChain::ur5();
        let q = JointConfig([0.0, -1.2, 1.2, 0.0, 0.4, 0.0]);
        let executed = vec![q];
        // Shell of occupied voxels all around the arm, leaving its own
        // volume free but nothing to move into.
        let mut map = binary_map(0.05);
        let cylinders = crate::robot::link_cylinders(&chain, &q, 0.0).unwrap();
        for i in -24..24 {
            for j in -24..24 {
                for k in 0..24 {
                    let p = Point3::new(i as f64 * 0.05, j as f64 * 0.05, k as f64 * 0.05);
                    let clear = cylinders.iter().any(|c| c.distance_to_point(&p) < 0.04);
                    if !clear {
                        let key = map.key_of(&p);
                        map.set(&key, 1.0);
                    }
                }
            }
        }
        let ee = end_effector_pose(&chain, &q).unwrap();
        let est = ObstacleEstimate {
            closest_point: Point3::from(ee.translation + Vector3::new(0.1, 0.0, 0.0)),
            distance: 0.05,
            velocity: Vector3::new(-1.0, 0.0, 0.0),
            timestamp: 0.0,
        };
        let err = reflexive_maneuver(&executed, &map, &est, &chain, &ReflexParams::default());
        assert!(matches!(err, Err(Error::Trapped)));
    }

    #[test]
    fn arbiter_preempts_once_then_replans() {
        let chain = KinematicChain::ur5();
        let executed = executed_line(&chain);
        let map = binary_map(0.05);
        let est = estimate(0.4, 1.2);
        let params = ReflexParams::default();
        let mut arbiter = Arbiter::new();
        let low = RiskAssessment { value: 0.2, mode: Mode::Predictive };
        let high = RiskAssessment { value: 1.9, mode: Mode::Reflexive };

        let d0 = arbiter.decide(&low, false, &executed, &map, &est, &chain, &params).unwrap();
        assert_eq!(d0, Directive::Continue);
        let d1 = arbiter.decide(&high, false, &executed, &map, &est, &chain, &params).unwrap();
        assert!(matches!(d1, Directive::Preempt { .. }), "rising edge preempts");
        // Escape still running, risk still high: no second preempt.
        let d2 = arbiter.decide(&high, true, &executed, &map, &est, &chain, &params).unwrap();
        assert_eq!(d2, Directive::Continue);
        let d3 = arbiter.decide(&high, true, &executed, &map, &est, &chain, &params).unwrap();
        assert_eq!(d3, Directive::Continue);
        // Escape done, risk subsided: replan to the original goal.
        let d4 = arbiter.decide(&low, false, &executed, &map, &est, &chain, &params).unwrap();
        assert_eq!(d4, Directive::Replan);
        let d5 = arbiter.decide(&low, false, &executed, &map, &est, &chain, &params).unwrap();
        assert_eq!(d5, Directive::Continue);
        // A fresh crossing preempts again.
        let d6 = arbiter.decide(&high, false, &executed, &map, &est, &chain, &params).unwrap();
        assert!(matches!(d6, Directive::Preempt { .. }));
    }

    #[test]
    fn event_line_is_stable() {
        let est = estimate(0.5, 1.0);
        let assessment = assess_risk(&est, &ReflexParams::default());
        let line = event_line(0.2, &assessment, &est, "preempt");
        assert_eq!(
            line,
            "t=0.2000 mode=reflexive d_risk=1.3333 d_eucl=0.5000 |v|=1.0000 directive=preempt"
        );
    }
}
