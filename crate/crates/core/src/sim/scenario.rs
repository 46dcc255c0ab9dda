//! Scenario schema: a TOML-serializable description of one closed-loop
//! simulation (robot, cameras, obstacles, parameters), plus the preset
//! builders used by the batch experiment suite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3, RigidTransform, Vector3};
use crate::occupancy::DecayParams;
use crate::planning::PlannerConfig;
use crate::robot::{end_effector_pose, reach_pose, JointConfig, KinematicChain};
use crate::behavior::ReflexParams;

use super::script::{ScriptSpec, ShapeSpec};

/// Which control stack drives the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Stop on blockage, replan on the spot, continue.
    Reactive,
    /// Danger-weighted background replanning plus the reflexive escape layer.
    PredictiveReflexive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkspaceSpec {
    /// Center of the cubic mapped volume.
    pub center: [f64; 3],
    /// Edge length of the mapped volume in meters.
    pub extent: f64,
    /// Voxel edge length in meters.
    pub voxel: f64,
}

impl Default for WorkspaceSpec {
    fn default() -> Self {
        Self { center: [0.0, 0.0, 0.45], extent: 3.0, voxel: 0.05 }
    }
}

impl WorkspaceSpec {
    pub fn bounds(&self) -> Aabb {
        Aabb::from_center_size(
            Point3::new(self.center[0], self.center[1], self.center[2]),
            self.extent,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotSpec {
    /// Kinematic chain id; only "ur5" is available.
    pub chain: String,
    /// Start joint configuration in radians.
    pub start_joints: Option<[f64; 6]>,
    /// Alternative: start end-effector position, resolved by IK at load.
    pub start_pose: Option<[f64; 3]>,
    /// Goal joint configuration; absent means hold the start pose.
    pub goal_joints: Option<[f64; 6]>,
    pub goal_pose: Option<[f64; 3]>,
    /// IK seed when poses are given; defaults to the start configuration.
    pub ik_seed: Option<[f64; 6]>,
    /// Fraction of the drive's maximum joint speed (pi rad/s).
    pub speed_fraction: f64,
    /// Fraction of the drive's maximum joint acceleration (2 pi rad/s^2).
    pub accel_fraction: f64,
    /// Extra radius added to the link cylinders when removing the robot's
    /// own body from sensed clouds.
    pub self_filter_padding: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            chain: "ur5".into(),
            start_joints: Some([0.0; 6]),
            start_pose: None,
            goal_joints: None,
            goal_pose: None,
            ik_seed: None,
            speed_fraction: 0.5,
            accel_fraction: 0.6,
            self_filter_padding: 0.02,
        }
    }
}

/// Map decay and reflexive-layer parameters with their experiment defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamSpec {
    /// Danger decay rate.
    pub alpha: f64,
    /// Cost written to a voxel on observation.
    pub reset_value: f64,
    /// Risk deceleration constant.
    pub gamma: f64,
    /// Risk at or above this triggers the reflexive layer.
    pub risk_threshold: f64,
    /// Portion of the executed arc retraced when backtracking.
    pub backtrack_fraction: f64,
    /// Escape translation in meters.
    pub escape_step: f64,
    /// Reachable-sphere radius that clips escape targets.
    pub workspace_radius: f64,
    /// Exponential smoothing factor for the obstacle velocity estimate.
    pub velocity_smoothing: f64,
    /// Fusion loop rate in Hz; one tick lasts 1/rate seconds.
    pub fusion_hz: f64,
}

impl Default for ParamSpec {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            reset_value: 0.999,
            gamma: 1.5,
            risk_threshold: 1.0,
            backtrack_fraction: 0.10,
            escape_step: 0.20,
            workspace_radius: 0.85,
            velocity_smoothing: 0.5,
            fusion_hz: 15.0,
        }
    }
}

impl ParamSpec {
    pub fn decay(&self) -> DecayParams {
        DecayParams { alpha: self.alpha, reset_value: self.reset_value }
    }

    pub fn reflex(&self) -> ReflexParams {
        ReflexParams {
            gamma: self.gamma,
            threshold: self.risk_threshold,
            backtrack_fraction: self.backtrack_fraction,
            escape_step: self.escape_step,
            workspace_radius: self.workspace_radius,
            velocity_smoothing: self.velocity_smoothing,
        }
    }
}

/// Planner knobs; the per-plan RNG seed is injected by the runner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSpec {
    pub max_planning_time: f64,
    pub attempts: usize,
    pub extend_step: f64,
    pub goal_bias: f64,
    pub max_candidates: usize,
    pub shortcut_attempts: usize,
    pub modeled_check_rate: f64,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        let d = PlannerConfig::default();
        Self {
            max_planning_time: d.max_planning_time,
            attempts: d.attempts,
            extend_step: d.extend_step,
            goal_bias: d.goal_bias,
            max_candidates: d.max_candidates,
            shortcut_attempts: d.shortcut_attempts,
            modeled_check_rate: d.modeled_check_rate,
        }
    }
}

impl PlannerSpec {
    pub fn to_config(&self, seed: u64) -> PlannerConfig {
        PlannerConfig {
            max_planning_time: self.max_planning_time,
            attempts: self.attempts,
            extend_step: self.extend_step,
            goal_bias: self.goal_bias,
            seed,
            max_candidates: self.max_candidates,
            shortcut_attempts: self.shortcut_attempts,
            modeled_check_rate: self.modeled_check_rate,
        }
    }
}

/// Point-cloud preprocessing applied per camera frame before fusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSpec {
    /// Voxel-grid downsample leaf size in meters; 0 disables.
    pub downsample_leaf: f64,
    /// Neighbor count for statistical outlier removal; 0 disables.
    pub outlier_neighbors: usize,
    /// Distance threshold in standard deviations for outlier removal.
    pub outlier_std_mult: f64,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self { downsample_leaf: 0.025, outlier_neighbors: 8, outlier_std_mult: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub name: String,
    /// "world" (fixed pose) or "end_effector" (rides the tool frame).
    #[serde(default = "default_mount")]
    pub mount: String,
    /// Camera position, world mount only.
    #[serde(default)]
    pub position: Option<[f64; 3]>,
    /// Point the optical axis at this world position, world mount only.
    #[serde(default)]
    pub look_at: Option<[f64; 3]>,
    pub hfov: f64,
    pub vfov: f64,
    pub resolution: [u32; 2],
    pub max_range: f64,
    pub noise_sigma: f64,
    pub fps: f64,
}

fn default_mount() -> String {
    "world".into()
}

impl CameraSpec {
    pub fn is_end_effector(&self) -> bool {
        self.mount == "end_effector"
    }

    pub fn world_pose(&self) -> Result<RigidTransform> {
        let pos = self
            .position
            .ok_or_else(|| Error::Scenario(format!("camera {}: world mount needs a position", self.name)))?;
        let look = self
            .look_at
            .ok_or_else(|| Error::Scenario(format!("camera {}: world mount needs look_at", self.name)))?;
        Ok(RigidTransform::looking_at(
            Point3::new(pos[0], pos[1], pos[2]),
            Point3::new(look[0], look[1], look[2]),
            Vector3::z(),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if self.mount != "world" && self.mount != "end_effector" {
            return Err(Error::Scenario(format!(
                "camera {}: mount must be \"world\" or \"end_effector\"",
                self.name
            )));
        }
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return Err(Error::Scenario(format!("camera {}: resolution must be positive", self.name)));
        }
        if !(self.hfov > 0.0 && self.vfov > 0.0 && self.max_range > 0.0 && self.fps > 0.0) {
            return Err(Error::Scenario(format!("camera {}: fov, range and fps must be positive", self.name)));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Scenario(format!("camera {}: noise_sigma must be >= 0", self.name)));
        }
        if !self.is_end_effector() {
            self.world_pose()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub name: String,
    pub shape: ShapeSpec,
    pub script: ScriptSpec,
}

/// Radial annuli over which the danger-map test reports band statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    /// Annulus center radii in meters.
    pub annuli: Vec<f64>,
    /// A voxel belongs to an annulus when its center's horizontal radius is
    /// within this halfwidth of the annulus radius.
    pub halfwidth: f64,
    /// Vertical slab of voxel centers included, [z_min, z_max).
    pub z_range: [f64; 2],
    /// Horizontal center of the annuli.
    pub center: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Round trips (or timed holds) executed back to back.
    pub runs: u32,
    pub variant: Variant,
    /// Per-run simulated time cap in seconds; goal-directed runs that exceed
    /// it are marked failed, hold runs simply last this long.
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Sensing-only time before the first run starts.
    #[serde(default)]
    pub warmup: f64,
    #[serde(default)]
    pub workspace: WorkspaceSpec,
    #[serde(default)]
    pub robot: RobotSpec,
    #[serde(default)]
    pub params: ParamSpec,
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default)]
    pub preprocess: PreprocessSpec,
    pub cameras: Vec<CameraSpec>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub measure: Option<MeasureSpec>,
}

fn default_duration() -> f64 {
    60.0
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Scenario("scenario needs at least one camera".into()));
        }
        if self.runs == 0 {
            return Err(Error::Scenario("run count must be >= 1".into()));
        }
        if self.robot.chain != "ur5" {
            return Err(Error::Scenario(format!("unknown chain {}", self.robot.chain)));
        }
        if !(self.workspace.voxel > 0.0 && self.workspace.extent > 0.0) {
            return Err(Error::Scenario("workspace dimensions must be positive".into()));
        }
        if !(self.params.fusion_hz > 0.0) {
            return Err(Error::Scenario("fusion_hz must be positive".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Scenario("duration must be positive".into()));
        }
        if self.warmup < 0.0 {
            return Err(Error::Scenario("warmup must be >= 0".into()));
        }
        if !(self.robot.speed_fraction > 0.0 && self.robot.speed_fraction <= 1.0)
            || !(self.robot.accel_fraction > 0.0 && self.robot.accel_fraction <= 1.0)
        {
            return Err(Error::Scenario("speed and accel fractions must be in (0, 1]".into()));
        }
        if self.robot.start_joints.is_some() == self.robot.start_pose.is_some() {
            return Err(Error::Scenario("give exactly one of start_joints or start_pose".into()));
        }
        if self.robot.goal_joints.is_some() && self.robot.goal_pose.is_some() {
            return Err(Error::Scenario("give at most one of goal_joints or goal_pose".into()));
        }
        for cam in &self.cameras {
            cam.validate()?;
        }
        for ob in &self.obstacles {
            ob.shape.validate()?;
        }
        if let Some(m) = &self.measure {
            if m.annuli.is_empty() || m.halfwidth <= 0.0 || m.z_range[0] >= m.z_range[1] {
                return Err(Error::Scenario("bad measure block".into()));
            }
        }
        Ok(())
    }

    /// Joint speed and acceleration caps implied by the fractions, clipped to
    /// what the chain itself allows.
    pub fn joint_caps(&self, chain: &KinematicChain) -> (f64, f64) {
        let v = (std::f64::consts::PI * self.robot.speed_fraction).min(chain.max_joint_speed);
        let a = (std::f64::consts::TAU * self.robot.accel_fraction).min(chain.max_joint_accel);
        (v, a)
    }

    /// Start and optional goal configurations, running IK for pose-specified
    /// endpoints (position-only: the seed's tool orientation is kept).
    pub fn resolve_joints(&self, chain: &KinematicChain) -> Result<(JointConfig, Option<JointConfig>)> {
        let seed = JointConfig(self.robot.ik_seed.or(self.robot.start_joints).unwrap_or([0.0; 6]));
        let solve = |target: &[f64; 3], seed: &JointConfig| -> Result<JointConfig> {
            let orient = end_effector_pose(chain, seed)?;
            let pose = RigidTransform {
                rotation: orient.rotation,
                translation: Vector3::new(target[0], target[1], target[2]),
            };
            reach_pose(chain, seed, &pose, 1e-3, 7.0)
        };
        let start = match (self.robot.start_joints, self.robot.start_pose) {
            (Some(j), _) => JointConfig(j),
            (None, Some(p)) => solve(&p, &seed)?,
            _ => unreachable!("validated"),
        };
        let goal = match (self.robot.goal_joints, self.robot.goal_pose) {
            (Some(j), _) => Some(JointConfig(j)),
            (None, Some(p)) => Some(solve(&p, &start)?),
            _ => None,
        };
        chain.check_limits(&start)?;
        if let Some(g) = &goal {
            chain.check_limits(g)?;
        }
        Ok((start, goal))
    }
}

/// Joint configuration A: tool at (0.45, -0.35, 0.35) m.
pub const POINT_A: [f64; 6] = [-0.330640, -2.033874, -1.693226, 0.031956, -0.400091, 0.0];
/// Joint configuration B: tool at (0.45, 0.35, 0.35) m, 0.7 m from A.
pub const POINT_B: [f64; 6] = [0.982865, -2.055217, -1.673357, 0.016687, -0.526211, 0.0];

/// Fixed wide-angle cameras used by all tabletop experiments, plus the
/// short-range camera riding the tool frame.
fn experiment_cameras() -> Vec<CameraSpec> {
    vec![
        CameraSpec {
            name: "front".into(),
            mount: "world".into(),
            position: Some([1.6, 0.0, 1.1]),
            look_at: Some([0.4, 0.0, 0.35]),
            hfov: 1.0,
            vfov: 1.0,
            resolution: [128, 96],
            max_range: 3.5,
            noise_sigma: 0.002,
            fps: 15.0,
        },
        CameraSpec {
            name: "side".into(),
            mount: "world".into(),
            position: Some([0.0, -1.6, 1.0]),
            look_at: Some([0.4, 0.0, 0.35]),
            hfov: 1.0,
            vfov: 1.0,
            resolution: [128, 96],
            max_range: 3.5,
            noise_sigma: 0.002,
            fps: 15.0,
        },
        CameraSpec {
            name: "wrist".into(),
            mount: "end_effector".into(),
            position: None,
            look_at: None,
            hfov: 0.65,
            vfov: 0.55,
            resolution: [80, 60],
            max_range: 1.0,
            noise_sigma: 0.002,
            fps: 30.0,
        },
    ]
}

fn experiment_base(name: &str, seed: u64, variant: Variant) -> Scenario {
    Scenario {
        name: name.into(),
        seed,
        runs: 15,
        variant,
        duration: 60.0,
        warmup: 0.0,
        workspace: WorkspaceSpec::default(),
        robot: RobotSpec {
            start_joints: Some(POINT_A),
            goal_joints: Some(POINT_B),
            ..RobotSpec::default()
        },
        params: ParamSpec::default(),
        planner: PlannerSpec::default(),
        preprocess: PreprocessSpec::default(),
        cameras: experiment_cameras(),
        obstacles: Vec::new(),
        measure: None,
    }
}

/// Obstacle-free A-B-A round trips; the timing baseline.
pub fn experiment_direct() -> Scenario {
    experiment_base("direct", 101, Variant::Reactive)
}

/// Static block standing on the straight A-B sweep; every trip detours.
pub fn experiment1() -> Scenario {
    let mut sc = experiment_base("experiment1", 102, Variant::Reactive);
    sc.obstacles.push(ObstacleSpec {
        name: "block".into(),
        shape: ShapeSpec::Box { half_extents: [0.05, 0.14, 0.30] },
        script: ScriptSpec::Static { position: [0.57, 0.0, 0.35] },
    });
    sc
}

/// A box repeatedly dropped into the corridor on a seeded random schedule.
fn dynamic_obstacle() -> ObstacleSpec {
    ObstacleSpec {
        name: "box".into(),
        shape: ShapeSpec::Box { half_extents: [0.06, 0.10, 0.14] },
        script: ScriptSpec::RandomZone {
            zone: [0.57, 0.0, 0.45],
            out: [0.57, 0.0, 1.45],
            speed: 0.42,
            entry_mean: 1.2,
            dwell: [2.5, 4.0],
            jitter: 0.03,
            horizon: 900.0,
            first_entry: 2.0,
        },
    }
}

/// Dynamic obstacle, stop-and-replan control stack.
pub fn experiment2() -> Scenario {
    let mut sc = experiment_base("experiment2", 103, Variant::Reactive);
    sc.obstacles.push(dynamic_obstacle());
    sc
}

/// Dynamic obstacle, identical schedule and seed to experiment 2, but the
/// two-layer stack drives the arm.
pub fn experiment3() -> Scenario {
    let mut sc = experiment_base("experiment3", 103, Variant::PredictiveReflexive);
    sc.obstacles.push(dynamic_obstacle());
    sc
}

/// Disc circling at three radii under an overhead camera whose view covers
/// the inner circle fully, the middle one partly, and the outer one not at
/// all, so the time-averaged danger map stratifies by radius.
pub fn dangermap_scenario() -> Scenario {
    let view_half_width: f64 = 0.28;
    let camera_height: f64 = 1.82;
    let top_plane: f64 = 0.52;
    let fov = 2.0 * (view_half_width / (camera_height - top_plane)).atan();
    Scenario {
        name: "dangermap".into(),
        seed: 7,
        runs: 1,
        variant: Variant::Reactive,
        // 20 repetitions of the 44.85 s three-circle sequence.
        duration: 897.0,
        warmup: 0.0,
        workspace: WorkspaceSpec::default(),
        robot: RobotSpec { start_joints: Some([0.0; 6]), ..RobotSpec::default() },
        params: ParamSpec::default(),
        planner: PlannerSpec::default(),
        preprocess: PreprocessSpec {
            downsample_leaf: 0.0,
            outlier_neighbors: 0,
            outlier_std_mult: 1.0,
        },
        cameras: vec![CameraSpec {
            name: "overhead".into(),
            mount: "world".into(),
            position: Some([0.0, 0.0, camera_height]),
            look_at: Some([0.0, 0.0, 0.47]),
            hfov: fov,
            vfov: fov,
            resolution: [96, 96],
            max_range: 3.0,
            noise_sigma: 0.0,
            fps: 15.0,
        }],
        obstacles: vec![ObstacleSpec {
            name: "disc".into(),
            shape: ShapeSpec::Cylinder { radius: 0.155, height: 0.10 },
            script: ScriptSpec::Circle {
                center: [0.0, 0.0, 0.47],
                radii: vec![0.20, 0.32, 0.46],
                durations: vec![9.1, 14.69, 21.06],
                repetitions: 20,
            },
        }],
        measure: Some(MeasureSpec {
            annuli: vec![0.20, 0.32, 0.46],
            halfwidth: 0.025,
            z_range: [0.50, 0.55],
            center: [0.0, 0.0],
        }),
    }
}

/// The arm holds still while a small sphere lunges at the tool from a
/// random direction; exercises the escape layer in isolation.
pub fn lunge_scenario(seed: u64) -> Scenario {
    let mut sc = experiment_base("lunge", seed, Variant::PredictiveReflexive);
    sc.runs = 1;
    sc.duration = 6.0;
    sc.robot.goal_joints = None;
    sc.obstacles.push(ObstacleSpec {
        name: "hand".into(),
        shape: ShapeSpec::Sphere { radius: 0.05 },
        script: ScriptSpec::Lunge {
            // Tool position at configuration A.
            target: [0.45, -0.35, 0.35],
            // Outward horizontal direction from the base through the tool.
            azimuth_center: -0.661043,
            azimuth_spread: 1.0,
            elevation_spread: 0.3,
            trigger: 1.5,
            distance: 0.6,
            speed: 1.0,
            hold: 0.3,
        },
    });
    sc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::end_effector_pose;

    #[test]
    fn presets_validate() {
        for sc in [
            experiment_direct(),
            experiment1(),
            experiment2(),
            experiment3(),
            dangermap_scenario(),
            lunge_scenario(42),
        ] {
            sc.validate().unwrap_or_else(|e| panic!("{}: {e}", sc.name));
        }
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let sc = experiment3();
        let text = sc.to_toml_string().unwrap();
        let back = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn endpoint_configs_hit_the_documented_tool_positions() {
        let chain = KinematicChain::ur5();
        let a = end_effector_pose(&chain, &JointConfig(POINT_A)).unwrap().translation;
        let b = end_effector_pose(&chain, &JointConfig(POINT_B)).unwrap().translation;
        assert!((a - Vector3::new(0.45, -0.35, 0.35)).norm() < 1e-4, "A at {a:?}");
        assert!((b - Vector3::new(0.45, 0.35, 0.35)).norm() < 1e-4, "B at {b:?}");
        assert!(((a - b).norm() - 0.7).abs() < 1e-4);
    }

    #[test]
    fn pose_endpoints_resolve_via_ik() {
        let chain = KinematicChain::ur5();
        let mut sc = experiment_direct();
        sc.robot.start_joints = None;
        sc.robot.start_pose = Some([0.45, -0.35, 0.35]);
        sc.robot.goal_joints = None;
        sc.robot.goal_pose = Some([0.45, 0.35, 0.35]);
        sc.robot.ik_seed = Some(POINT_A);
        let (start, goal) = sc.resolve_joints(&chain).unwrap();
        let sp = end_effector_pose(&chain, &start).unwrap().translation;
        let gp = end_effector_pose(&chain, &goal.unwrap()).unwrap().translation;
        assert!((sp - Vector3::new(0.45, -0.35, 0.35)).norm() < 2e-3);
        assert!((gp - Vector3::new(0.45, 0.35, 0.35)).norm() < 2e-3);
    }

    #[test]
    fn validation_rejects_bad_scenarios() {
        let mut sc = experiment_direct();
        sc.cameras.clear();
        assert!(sc.validate().is_err());

        let mut sc = experiment_direct();
        sc.runs = 0;
        assert!(sc.validate().is_err());

        let mut sc = experiment_direct();
        sc.robot.start_pose = Some([0.4, 0.0, 0.4]);
        assert!(sc.validate().is_err(), "both start forms given");

        let mut sc = experiment_direct();
        sc.cameras[0].mount = "ceiling".into();
        assert!(sc.validate().is_err());
    }

    #[test]
    fn caps_follow_fractions() {
        let chain = KinematicChain::ur5();
        let sc = experiment_direct();
        let (v, a) = sc.joint_caps(&chain);
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((a - 1.2 * std::f64::consts::PI).abs() < 1e-12);
    }
}
