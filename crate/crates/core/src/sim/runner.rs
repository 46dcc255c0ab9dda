//! Closed-loop simulation driver: the fixed-rate sense -> map -> decide ->
//! act loop, run lifecycles and metrics, the danger-map measurement mode,
//! and the batch experiment suite.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::behavior::{assess_risk, event_line, Arbiter, Directive, ObstacleTracker, ReflexParams};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, RigidTransform, Shape, Vector3, VoxelKey};
use crate::mix_seed;
use crate::occupancy::{DecayParams, MapMode, OccupancyOctree};
use crate::perception::{
    merge_clouds, simulate_depth_frame, statistical_outlier_removal, voxel_downsample,
    CameraModel, PointCloud,
};
use crate::planning::{
    audit_plan, evaluate_cost, plan_predictive, plan_reactive, PlannerConfig, TrajectoryPlan,
};
use crate::robot::{
    body_shapes, end_effector_pose, link_cylinders, remove_robot_points, JointConfig,
    KinematicChain,
};

use super::executor::Executor;
use super::scenario::{Scenario, Variant};
use super::script::{body_shape_clearance, ObstacleScript};

/// Extra end-effector path cost (meters of equivalent length) the remaining
/// trajectory must accumulate from the danger map before a background replan
/// is attempted.
const HOT_MARGIN: f64 = 0.08;

/// A background plan replaces the current one only when it is at least this
/// much cheaper, so replanning does not churn on equivalent paths.
const COMMIT_IMPROVEMENT: f64 = 0.05;

/// Seconds between planning retries after a failure, and between background
/// replan attempts.
const RETRY_PERIOD: f64 = 0.5;

/// Consecutive planning failures after which a run is marked failed.
const MAX_CONSECUTIVE_FAILURES: u32 = 20;

/// Background plans start from the configuration the arm is predicted to
/// occupy this many ticks ahead, leaving the modeled computation time to
/// elapse while the arm keeps moving.
const LOOKAHEAD_TICKS: u64 = 8;

/// A ready background plan is spliced in only when the arm is within this
/// joint-space distance of the plan's first waypoint.
const CONNECT_TOL: f64 = 0.5;

/// Joint-space arc (radians, lead joint) of upcoming path whose blockage
/// forces a synchronous emergency replan instead of a background one.
const EMERGENCY_ARC: f64 = 0.6;

/// Per-run outcome row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunMetrics {
    pub run: u32,
    /// Mean modeled planning seconds per planning event.
    pub planning_time: f64,
    /// Mean modeled smoothing seconds per planning event.
    pub optimization_time: f64,
    /// Simulated seconds from the first motion to arrival, including any
    /// mid-run stops; initial per-leg planning is excluded (it is reported
    /// in the planning column).
    pub execution_time: f64,
    /// Meters traveled by the end effector.
    pub path_length: f64,
    pub reflexive_triggers: u32,
    /// Mid-run replanning events (stops, background plans, post-escape).
    pub replans: u32,
    /// Ground-truth contact events.
    pub collisions: u32,
    pub failed: bool,
}

/// Across-run summary; standard deviations are population deviations over
/// the non-failed runs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Aggregate {
    pub runs: u32,
    pub failed_runs: u32,
    pub planning_mean: f64,
    pub planning_std: f64,
    pub optimization_mean: f64,
    pub optimization_std: f64,
    pub execution_mean: f64,
    pub execution_std: f64,
    pub path_mean: f64,
    pub reflexive_total: u32,
    pub replan_total: u32,
    pub collision_total: u32,
}

/// One per-tick sample, recorded when `SimOptions::record_ticks` is set.
#[derive(Clone, Debug)]
pub struct TickRecord {
    pub run: u32,
    pub t: f64,
    /// Risk value from the assessment, or 0 outside the two-layer variant.
    pub risk: f64,
    pub directive: &'static str,
    /// Ground-truth clearance to the nearest scripted obstacle (infinite
    /// when none is in the scene).
    pub clearance: f64,
}

/// Wall-clock cost of the tick pipeline. Reported out of band; never part
/// of the deterministic outputs.
#[derive(Clone, Copy, Debug, Default)]
pub struct LatencyReport {
    pub ticks: u64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub scenario_name: String,
    pub metrics: Vec<RunMetrics>,
    pub aggregate: Aggregate,
    /// Event log; one line per event, plus one line per tick in the
    /// two-layer variant.
    pub events: String,
    /// End-effector trace, "t x y z" per tick.
    pub ee_trace: String,
    /// Serialized danger map at the end of the simulation.
    pub danger_map: String,
    /// Serialized binary snapshot at the end of the simulation.
    pub binary_map: String,
    /// Smallest ground-truth obstacle clearance seen at any tick.
    pub min_clearance: f64,
    pub ticks: Vec<TickRecord>,
    pub latency: LatencyReport,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SimOptions {
    pub seed: Option<u64>,
    pub runs: Option<u32>,
    /// Run every pipeline stage sequentially; outputs must be identical.
    pub single_thread: bool,
    pub record_ticks: bool,
}

/// Per-annulus band statistics from the danger-map measurement.
#[derive(Clone, Copy, Debug)]
pub struct AnnulusStats {
    pub radius: f64,
    pub voxels: u32,
    /// Voxels with time-averaged cost in [0, 0.2).
    pub low: u32,
    /// Voxels in [0.2, 0.5).
    pub mid: u32,
    /// Voxels in [0.5, 1.0].
    pub high: u32,
    pub mean_cost: f64,
}

#[derive(Clone, Debug)]
pub struct DangerMapReport {
    pub annuli: Vec<AnnulusStats>,
    /// Full octree whose leaves hold the per-voxel time-averaged cost.
    pub averaged_map: String,
    /// Danger map state at the final tick.
    pub final_map: String,
    pub ticks: u64,
    pub latency: LatencyReport,
    /// Human-readable band table.
    pub table: String,
}

/// One fixed or tool-mounted depth camera with its own noise stream.
struct CamRig {
    model: CameraModel,
    on_tool: bool,
    world_pose: RigidTransform,
    /// Render every this many ticks.
    interval: u64,
    rng: ChaCha8Rng,
    /// Most recent processed frame, in camera coordinates, with the pose it
    /// was captured from.
    frame: Option<(PointCloud, RigidTransform)>,
}

/// World + mapping state stepped once per fusion tick.
struct Engine {
    chain: KinematicChain,
    dt: f64,
    decay: DecayParams,
    scripts: Vec<ObstacleScript>,
    cams: Vec<CamRig>,
    binary: OccupancyOctree,
    danger: OccupancyOctree,
    bounds: Aabb,
    voxel: f64,
    downsample_leaf: f64,
    outlier_neighbors: usize,
    outlier_std_mult: f64,
    filter_padding: f64,
    single_thread: bool,
    tick: u64,
    t: f64,
    q: JointConfig,
    trace: String,
    latency_sum: f64,
    latency_max: f64,
}

impl Engine {
    fn new(sc: &Scenario, chain: KinematicChain, q: JointConfig, single_thread: bool) -> Result<Self> {
        let bounds = sc.workspace.bounds();
        let mut scripts = Vec::new();
        for (idx, ob) in sc.obstacles.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(sc.seed, 10 + idx as u64));
            scripts.push(ObstacleScript::compile(&ob.name, &ob.shape, &ob.script, &mut rng)?);
        }
        let mut cams = Vec::new();
        for (idx, spec) in sc.cameras.iter().enumerate() {
            let model = CameraModel {
                name: spec.name.clone(),
                resolution: (spec.resolution[0], spec.resolution[1]),
                hfov: spec.hfov,
                vfov: spec.vfov,
                max_range: spec.max_range,
                noise_sigma: spec.noise_sigma,
                fps: spec.fps,
            };
            let on_tool = spec.is_end_effector();
            let world_pose = if on_tool {
                RigidTransform::identity()
            } else {
                spec.world_pose()?
            };
            let interval = (sc.params.fusion_hz / spec.fps).round().max(1.0) as u64;
            cams.push(CamRig {
                model,
                on_tool,
                world_pose,
                interval,
                rng: ChaCha8Rng::seed_from_u64(mix_seed(sc.seed, 1000 + idx as u64)),
                frame: None,
            });
        }
        Ok(Self {
            chain,
            dt: 1.0 / sc.params.fusion_hz,
            decay: sc.params.decay(),
            scripts,
            cams,
            binary: OccupancyOctree::new(MapMode::Binary, sc.workspace.voxel, bounds),
            danger: OccupancyOctree::new(MapMode::Full, sc.workspace.voxel, bounds),
            bounds,
            voxel: sc.workspace.voxel,
            downsample_leaf: sc.preprocess.downsample_leaf,
            outlier_neighbors: sc.preprocess.outlier_neighbors,
            outlier_std_mult: sc.preprocess.outlier_std_mult,
            filter_padding: sc.robot.self_filter_padding,
            single_thread,
            tick: 0,
            t: 0.0,
            q,
            trace: String::new(),
            latency_sum: 0.0,
            latency_max: 0.0,
        })
    }

    /// Shapes of every obstacle currently in the scene.
    fn obstacle_shapes(&self) -> Vec<Shape> {
        self.scripts.iter().filter_map(|s| s.shape_at(self.t)).collect()
    }

    /// Ground-truth clearance between the arm and the nearest scripted
    /// obstacle; infinite with an empty scene.
    fn clearance(&self) -> Result<f64> {
        let cylinders = link_cylinders(&self.chain, &self.q, 0.0)?;
        let mut best = f64::INFINITY;
        for shape in self.obstacle_shapes() {
            best = best.min(body_shape_clearance(&cylinders, &shape));
        }
        Ok(best)
    }

    /// Advances the world one tick: obstacle scripts, camera frames,
    /// preprocessing, fusion, self-filtering, and both maps.
    fn step_world(&mut self) -> Result<()> {
        let started = Instant::now();
        self.tick += 1;
        self.t = self.tick as f64 * self.dt;
        let t = self.t;

        // The scene the cameras see: scripted obstacles plus the arm itself.
        let mut scene = self.obstacle_shapes();
        let cylinders = link_cylinders(&self.chain, &self.q, 0.0)?;
        scene.extend(body_shapes(&cylinders));

        let ee_pose = end_effector_pose(&self.chain, &self.q)?;
        let tick = self.tick;
        let leaf = self.downsample_leaf;
        let k = self.outlier_neighbors;
        let mult = self.outlier_std_mult;
        let render = |cam: &mut CamRig| {
            if (tick - 1) % cam.interval != 0 {
                return;
            }
            let pose = if cam.on_tool { ee_pose } else { cam.world_pose };
            let mut cloud = simulate_depth_frame(&cam.model, &pose, &scene, t, &mut cam.rng);
            if leaf > 0.0 {
                cloud = voxel_downsample(&cloud, leaf);
            }
            if k > 0 {
                cloud = statistical_outlier_removal(&cloud, k, mult);
            }
            cam.frame = Some((cloud, pose));
        };
        if self.single_thread {
            self.cams.iter_mut().for_each(render);
        } else {
            self.cams.par_iter_mut().for_each(render);
        }

        let frames: Vec<(&PointCloud, &RigidTransform)> =
            self.cams.iter().filter_map(|c| c.frame.as_ref()).map(|(c, p)| (c, p)).collect();
        let merged = merge_clouds(&frames);
        let filter_cylinders = link_cylinders(&self.chain, &self.q, self.filter_padding)?;
        let filtered = remove_robot_points(&merged, &filter_cylinders);

        self.binary = OccupancyOctree::new(MapMode::Binary, self.voxel, self.bounds);
        self.binary.insert_points(&filtered.points, &self.decay);
        self.danger.insert_points(&filtered.points, &self.decay);
        self.danger.decay_step(self.dt, &self.decay)?;

        let ee = ee_pose.translation;
        let _ = writeln!(self.trace, "{:.4} {:.6} {:.6} {:.6}", t, ee.x, ee.y, ee.z);

        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        self.latency_sum += elapsed;
        self.latency_max = self.latency_max.max(elapsed);
        Ok(())
    }

    fn latency(&self) -> LatencyReport {
        LatencyReport {
            ticks: self.tick,
            mean_ms: if self.tick > 0 { self.latency_sum / self.tick as f64 } else { 0.0 },
            max_ms: self.latency_max,
        }
    }
}

/// Whether a waypoint path is collision-free against the current binary
/// snapshot, whole body, densely interpolated.
fn path_free(
    engine: &Engine,
    waypoints: &[JointConfig],
    check_cfg: &PlannerConfig,
) -> Result<bool> {
    if waypoints.len() < 2 {
        return Ok(true);
    }
    let plan = TrajectoryPlan::from_waypoints(&engine.chain, waypoints.to_vec(), 0.0)?;
    Ok(audit_plan(&plan, &engine.binary, &engine.chain, check_cfg))
}

/// Danger-map cost of a waypoint path in excess of its plain length.
fn danger_inflation(engine: &Engine, waypoints: &[JointConfig]) -> Result<f64> {
    if waypoints.len() < 2 {
        return Ok(0.0);
    }
    let plan = TrajectoryPlan::from_waypoints(&engine.chain, waypoints.to_vec(), 0.0)?;
    Ok(evaluate_cost(&plan, &engine.danger) - plan.polyline_length())
}

/// What the executor is currently working through.
#[derive(Clone, Copy, PartialEq, Eq)]
enum PlanKind {
    Goal,
    Escape,
}

/// A queued background plan waiting for its modeled computation to finish.
struct PendingPlan {
    ready_tick: u64,
    /// Executor generation the plan was grown for; a preempt or stop in the
    /// meantime invalidates it.
    generation: u64,
    plan: TrajectoryPlan,
}

struct RunState<'s> {
    sc: &'s Scenario,
    run: u32,
    run_seed: u64,
    plan_counter: u64,
    v_max: f64,
    a_max: f64,
    check_cfg: PlannerConfig,
    reflex: ReflexParams,
    legs: Vec<JointConfig>,
    leg_idx: usize,
    executor: Option<Executor>,
    /// Bumped on every executor replacement; stale background plans die.
    generation: u64,
    plan_kind: PlanKind,
    pending: Option<PendingPlan>,
    /// The engine tick until which the arm stands still for a synchronous
    /// (stop-the-robot) planning event.
    freeze_until: u64,
    /// Earliest tick for the next planning attempt after a failure.
    retry_at: u64,
    /// Earliest tick for the next background replan attempt.
    background_at: u64,
    consecutive_failures: u32,
    /// True from initial plan commit until leg arrival; execution ticks
    /// accrue while set, once past `exec_from_tick`.
    moving_phase: bool,
    /// First tick that counts as execution: the end of the leg's initial
    /// planning freeze. Mid-run freezes past this point stay charged to
    /// execution.
    exec_from_tick: u64,
    /// Set the tick the post-escape replan directive arrives.
    want_goal_replan: bool,
    executed: Vec<JointConfig>,
    tracker: ObstacleTracker,
    arbiter: Arbiter,
    // Metric accumulators.
    planning_total: f64,
    optimization_total: f64,
    planning_events: u32,
    exec_ticks: u64,
    path_length: f64,
    reflexive_triggers: u32,
    replans: u32,
    collisions: u32,
    failed: bool,
    prev_clearance: f64,
    ee_prev: Vector3,
}

enum PlanAttempt {
    Committed(TrajectoryPlan),
    Failed,
}

impl<'s> RunState<'s> {
    /// Runs one planning event now. Charges the planning columns; the caller
    /// decides whether the modeled time also freezes the arm.
    fn plan_now(
        &mut self,
        engine: &Engine,
        from: &JointConfig,
        to: &JointConfig,
        kind: &str,
        events: &mut String,
    ) -> Result<PlanAttempt> {
        let cfg = self.sc.planner.to_config(mix_seed(self.run_seed, self.plan_counter));
        self.plan_counter += 1;
        let attempt = match self.sc.variant {
            Variant::Reactive => plan_reactive(from, to, &engine.binary, &engine.chain, &cfg),
            Variant::PredictiveReflexive => {
                plan_predictive(from, to, &engine.binary, &engine.danger, &engine.chain, &cfg)
            }
        };
        match attempt {
            Ok(plan) => {
                self.consecutive_failures = 0;
                self.planning_total += plan.planning_time;
                self.optimization_total += plan.optimization_time;
                self.planning_events += 1;
                let _ = writeln!(
                    events,
                    "run={} t={:.4} event=plan kind={} planning={:.4} optimization={:.4} waypoints={} cost={:.4}",
                    self.run,
                    engine.t,
                    kind,
                    plan.planning_time,
                    plan.optimization_time,
                    plan.waypoints.len(),
                    plan.cost
                );
                Ok(PlanAttempt::Committed(plan))
            }
            Err(Error::PlanningFailed(_)) | Err(Error::Trapped) => {
                self.consecutive_failures += 1;
                // A failed search still burns its full modeled budget.
                self.planning_total += self.failed_plan_seconds();
                self.planning_events += 1;
                let _ = writeln!(
                    events,
                    "run={} t={:.4} event=plan_failed kind={} consecutive={}",
                    self.run, engine.t, kind, self.consecutive_failures
                );
                if self.consecutive_failures >= MAX_CONSECUTIVE_FAILURES {
                    self.failed = true;
                    let _ = writeln!(
                        events,
                        "run={} t={:.4} event=abort reason=planning",
                        self.run, engine.t
                    );
                }
                Ok(PlanAttempt::Failed)
            }
            Err(e) => Err(e),
        }
    }

    fn freeze_ticks(&self, plan: &TrajectoryPlan, engine: &Engine) -> u64 {
        ((plan.planning_time + plan.optimization_time) / engine.dt).ceil() as u64
    }

    /// Modeled seconds a failed planning call costs: every attempt runs its
    /// whole budget before the planner gives up.
    fn failed_plan_seconds(&self) -> f64 {
        self.check_cfg.attempts as f64 * self.check_cfg.max_planning_time
    }

    /// Ticks the arm stands still after a failed synchronous planning call.
    fn failed_freeze_ticks(&self, engine: &Engine) -> u64 {
        (self.failed_plan_seconds() / engine.dt).ceil() as u64
    }

    fn leg_goal(&self) -> Option<&JointConfig> {
        self.legs.get(self.leg_idx)
    }
}

/// Simulates every run of the scenario back to back on one continuous world
/// clock; the danger map persists across runs.
pub fn run_closed_loop(scenario: &Scenario, opts: &SimOptions) -> Result<SimOutput> {
    let mut sc = scenario.clone();
    if let Some(seed) = opts.seed {
        sc.seed = seed;
    }
    if let Some(runs) = opts.runs {
        sc.runs = runs;
    }
    sc.validate()?;
    let chain = KinematicChain::ur5();
    let (v_max, a_max) = sc.joint_caps(&chain);
    let (start, goal) = sc.resolve_joints(&chain)?;
    let mut engine = Engine::new(&sc, chain, start, opts.single_thread)?;

    let mut events = String::new();
    let mut metrics = Vec::new();
    let mut ticks = Vec::new();
    let mut min_clearance = f64::INFINITY;

    let warmup_ticks = (sc.warmup * sc.params.fusion_hz).round() as u64;
    for _ in 0..warmup_ticks {
        engine.step_world()?;
        min_clearance = min_clearance.min(engine.clearance()?);
    }

    for run in 1..=sc.runs {
        let m = run_one(
            &sc,
            &mut engine,
            run,
            start,
            goal,
            v_max,
            a_max,
            &mut events,
            &mut ticks,
            &mut min_clearance,
            opts.record_ticks,
        )?;
        metrics.push(m);
    }

    let aggregate = aggregate(&metrics);
    Ok(SimOutput {
        scenario_name: sc.name.clone(),
        metrics,
        aggregate,
        events,
        ee_trace: std::mem::take(&mut engine.trace),
        danger_map: engine.danger.write_text(),
        binary_map: engine.binary.write_text(),
        min_clearance,
        ticks,
        latency: engine.latency(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    sc: &Scenario,
    engine: &mut Engine,
    run: u32,
    start: JointConfig,
    goal: Option<JointConfig>,
    v_max: f64,
    a_max: f64,
    events: &mut String,
    ticks_out: &mut Vec<TickRecord>,
    min_clearance: &mut f64,
    record_ticks: bool,
) -> Result<RunMetrics> {
    // A goal-directed run is the out-and-back pair of legs; without a goal
    // the arm holds its pose for the whole duration.
    let legs = match goal {
        Some(g) => vec![g, start],
        None => Vec::new(),
    };
    let hold = legs.is_empty();
    let mut st = RunState {
        sc,
        run,
        run_seed: mix_seed(sc.seed, 10_000 + run as u64),
        plan_counter: 0,
        v_max,
        a_max,
        check_cfg: sc.planner.to_config(0),
        reflex: sc.params.reflex(),
        legs,
        leg_idx: 0,
        executor: None,
        generation: 0,
        plan_kind: PlanKind::Goal,
        pending: None,
        freeze_until: 0,
        retry_at: 0,
        background_at: 0,
        consecutive_failures: 0,
        moving_phase: false,
        exec_from_tick: 0,
        want_goal_replan: false,
        executed: vec![engine.q],
        tracker: ObstacleTracker::new(sc.params.velocity_smoothing),
        arbiter: Arbiter::new(),
        planning_total: 0.0,
        optimization_total: 0.0,
        planning_events: 0,
        exec_ticks: 0,
        path_length: 0.0,
        reflexive_triggers: 0,
        replans: 0,
        collisions: 0,
        failed: false,
        prev_clearance: f64::INFINITY,
        ee_prev: end_effector_pose(&engine.chain, &engine.q)?.translation,
    };
    let retry_ticks = (RETRY_PERIOD / engine.dt).ceil() as u64;
    let max_ticks = (sc.duration * sc.params.fusion_hz).round() as u64;
    let _ = writeln!(
        events,
        "run={run} t={:.4} event=start variant={:?} legs={}",
        engine.t,
        sc.variant,
        st.legs.len()
    );

    for _ in 0..max_ticks {
        engine.step_world()?;

        // Ground-truth contact audit, independent of the voxel maps.
        let clearance = engine.clearance()?;
        *min_clearance = (*min_clearance).min(clearance);
        if clearance <= 0.0 && st.prev_clearance > 0.0 {
            st.collisions += 1;
            let _ = writeln!(
                events,
                "run={run} t={:.4} event=collision clearance={:.4}",
                engine.t, clearance
            );
        }
        st.prev_clearance = clearance;

        if st.executed.last() != Some(&engine.q) {
            st.executed.push(engine.q);
        }

        let frozen = engine.tick < st.freeze_until;
        let mut directive_label = "continue";
        let mut risk_value = 0.0;

        // Decision layer: risk assessment and arbitration (two-layer variant
        // only; the reactive variant has no reflexive layer).
        if sc.variant == Variant::PredictiveReflexive {
            let est = st.tracker.update(&engine.binary, &engine.chain, &engine.q, engine.t)?;
            let assessment = assess_risk(&est, &st.reflex);
            risk_value = assessment.value;
            let escape_active = st.plan_kind == PlanKind::Escape
                && st.executor.as_ref().is_some_and(|e| !e.is_done());
            let decision = st.arbiter.decide(
                &assessment,
                escape_active,
                &st.executed,
                &engine.binary,
                &est,
                &engine.chain,
                &st.reflex,
            );
            let directive = match decision {
                Ok(d) => d,
                Err(Error::Trapped) => {
                    let _ = writeln!(events, "run={run} t={:.4} event=trapped", engine.t);
                    Directive::Continue
                }
                Err(e) => return Err(e),
            };
            directive_label = directive.label();
            let _ = writeln!(
                events,
                "run={run} {}",
                event_line(engine.t, &assessment, &est, directive_label)
            );
            match directive {
                Directive::Preempt { escape } => {
                    st.reflexive_triggers += 1;
                    st.executor = Some(Executor::new(escape, v_max, a_max));
                    st.generation += 1;
                    st.plan_kind = PlanKind::Escape;
                    st.executed = vec![engine.q];
                    st.pending = None;
                    st.freeze_until = 0;
                    st.want_goal_replan = false;
                }
                Directive::Replan => {
                    st.want_goal_replan = true;
                }
                Directive::Continue => {}
            }
        }

        if !frozen && !st.failed {
            plan_management(sc, engine, &mut st, retry_ticks, events)?;
        }

        // Splice in a ready background plan before stepping.
        if st.pending.is_some() && engine.tick >= st.freeze_until {
            try_commit_pending(engine, &mut st, events)?;
        }

        // Step the arm unless a synchronous planning event holds it still.
        let now_frozen = engine.tick < st.freeze_until;
        let mut outcome = None;
        if !now_frozen {
            if let Some(ex) = st.executor.as_mut() {
                let out = ex.step(engine.dt);
                engine.q = *ex.current();
                outcome = Some(out);
            }
        }
        if let Some(out) = outcome {
            if out.moved {
                let ee = end_effector_pose(&engine.chain, &engine.q)?.translation;
                st.path_length += (ee - st.ee_prev).norm();
                st.ee_prev = ee;
            }
            if out.done && st.plan_kind == PlanKind::Goal {
                let arrived = st
                    .leg_goal()
                    .is_some_and(|g| g.max_abs_diff(&engine.q) < 1e-9);
                if arrived {
                    let _ = writeln!(
                        events,
                        "run={run} t={:.4} event=arrival leg={}",
                        engine.t,
                        st.leg_idx + 1
                    );
                    st.leg_idx += 1;
                    st.executor = None;
                    st.generation += 1;
                    st.pending = None;
                    st.moving_phase = false;
                    st.executed = vec![engine.q];
                }
            }
            // A finished escape stays parked; the arbiter requests the goal
            // replan on a later tick.
        }

        if st.moving_phase && engine.tick >= st.exec_from_tick {
            st.exec_ticks += 1;
        }

        if record_ticks {
            ticks_out.push(TickRecord {
                run,
                t: engine.t,
                risk: risk_value,
                directive: directive_label,
                clearance,
            });
        }

        if !hold && st.leg_idx >= st.legs.len() {
            break;
        }
        if st.failed {
            break;
        }
    }

    if !hold && st.leg_idx < st.legs.len() && !st.failed {
        st.failed = true;
        let _ = writeln!(events, "run={run} t={:.4} event=abort reason=timeout", engine.t);
    }
    // A run that touched an obstacle cannot count as a pass.
    if st.collisions > 0 && !st.failed {
        st.failed = true;
        let _ = writeln!(events, "run={run} t={:.4} event=abort reason=contact", engine.t);
    }

    let events_n = st.planning_events.max(1) as f64;
    let metrics = RunMetrics {
        run,
        planning_time: st.planning_total / events_n,
        optimization_time: st.optimization_total / events_n,
        execution_time: st.exec_ticks as f64 * engine.dt,
        path_length: st.path_length,
        reflexive_triggers: st.reflexive_triggers,
        replans: st.replans,
        collisions: st.collisions,
        failed: st.failed,
    };
    let _ = writeln!(
        events,
        "run={run} t={:.4} event=end execution={:.4} path={:.4} reflexive={} replans={} collisions={} failed={}",
        engine.t,
        metrics.execution_time,
        metrics.path_length,
        metrics.reflexive_triggers,
        metrics.replans,
        metrics.collisions,
        metrics.failed
    );
    Ok(metrics)
}

/// Plan lifecycle outside the executor step: initial leg plans, post-escape
/// replans, reactive stop-and-replan, and the background replan queue.
fn plan_management(
    sc: &Scenario,
    engine: &Engine,
    st: &mut RunState,
    retry_ticks: u64,
    events: &mut String,
) -> Result<()> {
    if engine.tick < st.retry_at {
        return Ok(());
    }
    let here = engine.q;

    // Post-escape: plan fresh to the current leg goal, stopping to think.
    if st.want_goal_replan {
        st.want_goal_replan = false;
        st.plan_kind = PlanKind::Goal;
        st.executor = None;
        st.executed = vec![here];
        if let Some(goal) = st.leg_goal().copied() {
            st.replans += 1;
            match st.plan_now(engine, &here, &goal, "post_escape", events)? {
                PlanAttempt::Committed(plan) => {
                    st.freeze_until = engine.tick + st.freeze_ticks(&plan, engine);
                    st.executor = Some(Executor::new(plan.waypoints, st.v_max, st.a_max));
                    st.generation += 1;
                }
                PlanAttempt::Failed => {
                    st.freeze_until = engine.tick + st.failed_freeze_ticks(engine);
                    st.retry_at = engine.tick + retry_ticks;
                    st.want_goal_replan = true;
                }
            }
        }
        return Ok(());
    }

    // Initial plan for the current leg.
    if st.executor.is_none() {
        if let Some(goal) = st.leg_goal().copied() {
            match st.plan_now(engine, &here, &goal, "initial", events)? {
                PlanAttempt::Committed(plan) => {
                    let freeze = st.freeze_ticks(&plan, engine);
                    st.freeze_until = engine.tick + freeze;
                    st.executor = Some(Executor::new(plan.waypoints, st.v_max, st.a_max));
                    st.generation += 1;
                    st.plan_kind = PlanKind::Goal;
                    st.executed = vec![here];
                    st.moving_phase = true;
                    st.exec_from_tick = engine.tick + freeze;
                    st.retry_at = 0;
                    st.background_at = engine.tick + freeze;
                }
                PlanAttempt::Failed => {
                    st.freeze_until = engine.tick + st.failed_freeze_ticks(engine);
                    st.retry_at = engine.tick + retry_ticks;
                }
            }
        }
        return Ok(());
    }

    // In-flight management of the active goal plan.
    if st.plan_kind != PlanKind::Goal {
        return Ok(());
    }
    let Some(goal) = st.leg_goal().copied() else {
        return Ok(());
    };
    let remaining = st.executor.as_ref().map(|e| e.remaining()).unwrap_or_default();
    if remaining.len() < 2 {
        return Ok(());
    }

    match sc.variant {
        Variant::Reactive => {
            // Stop as soon as any part of the remaining path is blocked.
            if !path_free(engine, &remaining, &st.check_cfg)? {
                let _ = writeln!(events, "run={} t={:.4} event=blocked", st.run, engine.t);
                st.replans += 1;
                st.executed = vec![here];
                match st.plan_now(engine, &here, &goal, "stop", events)? {
                    PlanAttempt::Committed(plan) => {
                        st.freeze_until = engine.tick + st.freeze_ticks(&plan, engine);
                        st.executor = Some(Executor::new(plan.waypoints, st.v_max, st.a_max));
                        st.generation += 1;
                    }
                    PlanAttempt::Failed => {
                        // Park for the whole failed search, then retry.
                        st.executor = None;
                        st.generation += 1;
                        st.freeze_until = engine.tick + st.failed_freeze_ticks(engine);
                        st.retry_at = engine.tick + retry_ticks;
                    }
                }
            }
        }
        Variant::PredictiveReflexive => {
            let imminent = arc_prefix(&remaining, EMERGENCY_ARC);
            let imminent_blocked = !path_free(engine, imminent, &st.check_cfg)?;
            if imminent_blocked {
                // The segment under the wheels is blocked: emergency stop.
                let _ = writeln!(events, "run={} t={:.4} event=blocked", st.run, engine.t);
                st.pending = None;
                st.replans += 1;
                st.executed = vec![here];
                match st.plan_now(engine, &here, &goal, "emergency", events)? {
                    PlanAttempt::Committed(plan) => {
                        st.freeze_until = engine.tick + st.freeze_ticks(&plan, engine);
                        st.executor = Some(Executor::new(plan.waypoints, st.v_max, st.a_max));
                        st.generation += 1;
                    }
                    PlanAttempt::Failed => {
                        st.executor = None;
                        st.generation += 1;
                        st.freeze_until = engine.tick + st.failed_freeze_ticks(engine);
                        st.retry_at = engine.tick + retry_ticks;
                    }
                }
                return Ok(());
            }
            if st.pending.is_some() || engine.tick < st.background_at {
                return Ok(());
            }
            let path_blocked = !path_free(engine, &remaining, &st.check_cfg)?;
            let hot = danger_inflation(engine, &remaining)? > HOT_MARGIN;
            if path_blocked || hot {
                // Plan from where the arm will be once the modeled planning
                // time has elapsed; the arm keeps moving in the meantime.
                let ex = st.executor.as_ref().expect("active plan");
                let from = ex.predicted_after(LOOKAHEAD_TICKS, engine.dt);
                if from.max_abs_diff(&goal) < 1e-9 {
                    // Arriving before any plan could land.
                    st.background_at = engine.tick + retry_ticks;
                    return Ok(());
                }
                st.replans += 1;
                match st.plan_now(engine, &from, &goal, "background", events)? {
                    PlanAttempt::Committed(plan) => {
                        let ready_tick = engine.tick
                            + st.freeze_ticks(&plan, engine).max(1);
                        st.pending = Some(PendingPlan {
                            ready_tick,
                            generation: st.generation,
                            plan,
                        });
                    }
                    PlanAttempt::Failed => {}
                }
                st.background_at = engine.tick + retry_ticks;
            }
        }
    }
    Ok(())
}

/// Swaps in a ready background plan when the arm is paused at the boundary
/// the plan starts from.
fn try_commit_pending(engine: &Engine, st: &mut RunState, events: &mut String) -> Result<()> {
    let Some(pending) = st.pending.as_ref() else {
        return Ok(());
    };
    if engine.tick < pending.ready_tick {
        return Ok(());
    }
    let stale = pending.generation != st.generation
        || st.plan_kind != PlanKind::Goal
        || pending
            .plan
            .waypoints
            .first()
            .is_none_or(|w| w.max_abs_diff(&engine.q) > CONNECT_TOL);
    if stale {
        st.pending = None;
        let _ = writeln!(events, "run={} t={:.4} event=drop reason=stale", st.run, engine.t);
        return Ok(());
    }
    let pending = st.pending.take().expect("checked above");
    // Splice from the current configuration onto the plan's start, then
    // re-audit against the current map and require a real improvement over
    // what the arm is already doing.
    let mut spliced = pending.plan.waypoints.clone();
    if spliced[0].max_abs_diff(&engine.q) > 1e-9 {
        spliced.insert(0, engine.q);
    }
    let remaining = st.executor.as_ref().expect("active plan").remaining();
    let fresh_ok = path_free(engine, &spliced, &st.check_cfg)?;
    let current_blocked = !path_free(engine, &remaining, &st.check_cfg)?;
    let improvement = path_cost(engine, &remaining)? - path_cost(engine, &spliced)?;
    if fresh_ok && (current_blocked || improvement > COMMIT_IMPROVEMENT) {
        let _ = writeln!(
            events,
            "run={} t={:.4} event=commit waypoints={}",
            st.run,
            engine.t,
            spliced.len()
        );
        st.executor = Some(Executor::new(spliced, st.v_max, st.a_max));
        st.generation += 1;
        st.executed = vec![engine.q];
    } else {
        let _ = writeln!(
            events,
            "run={} t={:.4} event=drop reason={}",
            st.run,
            engine.t,
            if fresh_ok { "no_gain" } else { "blocked" }
        );
    }
    Ok(())
}

/// Longest waypoint prefix whose cumulative lead-joint arc stays within
/// `arc`, always at least the first segment.
fn arc_prefix(waypoints: &[JointConfig], arc: f64) -> &[JointConfig] {
    let mut acc = 0.0;
    let mut end = 2.min(waypoints.len());
    for (i, w) in waypoints.windows(2).enumerate() {
        acc += w[0].max_abs_diff(&w[1]);
        if acc > arc {
            break;
        }
        end = i + 2;
    }
    &waypoints[..end]
}

/// Danger-weighted cost of a waypoint path against the current danger map.
fn path_cost(engine: &Engine, waypoints: &[JointConfig]) -> Result<f64> {
    let plan = TrajectoryPlan::from_waypoints(&engine.chain, waypoints.to_vec(), 0.0)?;
    Ok(evaluate_cost(&plan, &engine.danger))
}

fn aggregate(metrics: &[RunMetrics]) -> Aggregate {
    let ok: Vec<&RunMetrics> = metrics.iter().filter(|m| !m.failed).collect();
    let n = ok.len() as f64;
    let mean = |f: fn(&RunMetrics) -> f64| {
        if ok.is_empty() {
            0.0
        } else {
            ok.iter().map(|m| f(m)).sum::<f64>() / n
        }
    };
    let std = |f: fn(&RunMetrics) -> f64, mu: f64| {
        if ok.is_empty() {
            0.0
        } else {
            (ok.iter().map(|m| (f(m) - mu).powi(2)).sum::<f64>() / n).sqrt()
        }
    };
    let planning_mean = mean(|m| m.planning_time);
    let optimization_mean = mean(|m| m.optimization_time);
    let execution_mean = mean(|m| m.execution_time);
    Aggregate {
        runs: metrics.len() as u32,
        failed_runs: metrics.iter().filter(|m| m.failed).count() as u32,
        planning_mean,
        planning_std: std(|m| m.planning_time, planning_mean),
        optimization_mean,
        optimization_std: std(|m| m.optimization_time, optimization_mean),
        execution_mean,
        execution_std: std(|m| m.execution_time, execution_mean),
        path_mean: mean(|m| m.path_length),
        reflexive_total: metrics.iter().map(|m| m.reflexive_triggers).sum(),
        replan_total: metrics.iter().map(|m| m.replans).sum(),
        collision_total: metrics.iter().map(|m| m.collisions).sum(),
    }
}

/// Metrics CSV: one row per run plus one aggregate row.
pub fn metrics_csv(metrics: &[RunMetrics], agg: &Aggregate) -> String {
    let mut out = String::from(
        "run,planning_time,optimization_time,execution_time,path_length,reflexive_triggers,replans,collisions,failed,planning_std,optimization_std,execution_std\n",
    );
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},,,",
            m.run,
            m.planning_time,
            m.optimization_time,
            m.execution_time,
            m.path_length,
            m.reflexive_triggers,
            m.replans,
            m.collisions,
            m.failed
        );
    }
    let _ = writeln!(
        out,
        "aggregate,{:.6},{:.6},{:.6},{:.6},{},{},{},{},{:.6},{:.6},{:.6}",
        agg.planning_mean,
        agg.optimization_mean,
        agg.execution_mean,
        agg.path_mean,
        agg.reflexive_total,
        agg.replan_total,
        agg.collision_total,
        agg.failed_runs,
        agg.planning_std,
        agg.optimization_std,
        agg.execution_std
    );
    out
}

/// Holds the arm still and accumulates the per-voxel time average of the
/// danger map over the whole scenario duration, then reports band counts
/// per measurement annulus.
pub fn run_danger_map_test(scenario: &Scenario, opts: &SimOptions) -> Result<DangerMapReport> {
    let mut sc = scenario.clone();
    if let Some(seed) = opts.seed {
        sc.seed = seed;
    }
    sc.validate()?;
    let measure = sc
        .measure
        .clone()
        .ok_or_else(|| Error::Scenario("danger-map test needs a [measure] block".into()))?;
    let chain = KinematicChain::ur5();
    let (start, _) = sc.resolve_joints(&chain)?;
    let mut engine = Engine::new(&sc, chain, start, opts.single_thread)?;

    let ticks = (sc.duration * sc.params.fusion_hz).round() as u64;
    let mut sums: HashMap<VoxelKey, f64> = HashMap::new();
    for _ in 0..ticks {
        engine.step_world()?;
        for (key, cost) in engine.danger.leaves() {
            *sums.entry(key).or_insert(0.0) += cost;
        }
    }

    // Time-averaged map: a voxel never observed keeps mean cost exactly 0.
    let mut averaged =
        OccupancyOctree::new(MapMode::Full, engine.voxel, engine.bounds);
    let mut keys: Vec<_> = sums.keys().copied().collect();
    keys.sort_by_key(|k| (k.i, k.j, k.k));
    for key in &keys {
        averaged.set(key, sums[key] / ticks as f64);
    }

    // Enumerate every voxel of the measurement slab, visited or not.
    let origin = *engine.danger.origin();
    let voxel = engine.voxel;
    let per_axis = (sc.workspace.extent / voxel).round() as i32;
    let mut annuli = Vec::new();
    for &radius in &measure.annuli {
        let mut stats = AnnulusStats { radius, voxels: 0, low: 0, mid: 0, high: 0, mean_cost: 0.0 };
        let mut total = 0.0;
        for i in 0..per_axis {
            for j in 0..per_axis {
                for k in 0..per_axis {
                    let key = VoxelKey { i, j, k };
                    let c = key.center(voxel, &origin);
                    if c.z < measure.z_range[0] || c.z >= measure.z_range[1] {
                        continue;
                    }
                    let r = ((c.x - measure.center[0]).powi(2)
                        + (c.y - measure.center[1]).powi(2))
                    .sqrt();
                    if (r - radius).abs() > measure.halfwidth {
                        continue;
                    }
                    let mean = sums.get(&key).map_or(0.0, |s| s / ticks as f64);
                    stats.voxels += 1;
                    total += mean;
                    if mean < 0.2 {
                        stats.low += 1;
                    } else if mean < 0.5 {
                        stats.mid += 1;
                    } else {
                        stats.high += 1;
                    }
                }
            }
        }
        stats.mean_cost = if stats.voxels > 0 { total / stats.voxels as f64 } else { 0.0 };
        annuli.push(stats);
    }

    let mut table = String::from("radius_m voxels low[0,0.2) mid[0.2,0.5) high[0.5,1.0] mean\n");
    for s in &annuli {
        let _ = writeln!(
            table,
            "{:.2} {} {} {} {} {:.4}",
            s.radius, s.voxels, s.low, s.mid, s.high, s.mean_cost
        );
    }

    Ok(DangerMapReport {
        annuli,
        averaged_map: averaged.write_text(),
        final_map: engine.danger.write_text(),
        ticks,
        latency: engine.latency(),
        table,
    })
}

/// Experiment identifiers understood by the batch suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentId {
    Experiment1,
    Experiment2,
    Experiment3,
    Direct,
}

impl ExperimentId {
    pub fn scenario(&self) -> Scenario {
        match self {
            ExperimentId::Experiment1 => super::scenario::experiment1(),
            ExperimentId::Experiment2 => super::scenario::experiment2(),
            ExperimentId::Experiment3 => super::scenario::experiment3(),
            ExperimentId::Direct => super::scenario::experiment_direct(),
        }
    }
}

/// Ordering checks over the suite's mean execution times.
#[derive(Clone, Copy, Debug, Default)]
pub struct OrderingChecks {
    pub direct_lt_exp3: bool,
    pub exp3_lt_exp1: bool,
    pub exp1_lt_exp2: bool,
    pub exp2_ge_2x_exp3: bool,
    pub exp3_collisions: u32,
}

pub struct SuiteReport {
    /// Outputs in the fixed order: experiment1, experiment2, experiment3,
    /// direct.
    pub outputs: Vec<SimOutput>,
    pub comparison: String,
    pub checks: OrderingChecks,
}

/// Runs the four tabletop scenarios and assembles the comparison table.
pub fn run_experiment_suite(opts: &SimOptions) -> Result<SuiteReport> {
    let ids = [
        ExperimentId::Experiment1,
        ExperimentId::Experiment2,
        ExperimentId::Experiment3,
        ExperimentId::Direct,
    ];
    let run_opts = SimOptions { seed: None, runs: opts.runs, ..*opts };
    let outputs: Result<Vec<SimOutput>> = if opts.single_thread {
        ids.iter().map(|id| run_closed_loop(&id.scenario(), &run_opts)).collect()
    } else {
        ids.par_iter().map(|id| run_closed_loop(&id.scenario(), &run_opts)).collect()
    };
    let outputs = outputs?;

    let mut comparison = String::from(
        "experiment planning_s optimization_s execution_s path_m reflexive replans collisions failed\n",
    );
    for out in &outputs {
        let a = &out.aggregate;
        let _ = writeln!(
            comparison,
            "{} {:.4} {:.4} {:.4} {:.4} {} {} {} {}",
            out.scenario_name,
            a.planning_mean,
            a.optimization_mean,
            a.execution_mean,
            a.path_mean,
            a.reflexive_total,
            a.replan_total,
            a.collision_total,
            a.failed_runs
        );
    }
    let exec = |i: usize| outputs[i].aggregate.execution_mean;
    let checks = OrderingChecks {
        direct_lt_exp3: exec(3) < exec(2),
        exp3_lt_exp1: exec(2) < exec(0),
        exp1_lt_exp2: exec(0) < exec(1),
        exp2_ge_2x_exp3: exec(1) >= 2.0 * exec(2),
        exp3_collisions: outputs[2].aggregate.collision_total,
    };
    let _ = writeln!(comparison, "direct<exp3: {}", checks.direct_lt_exp3);
    let _ = writeln!(comparison, "exp3<exp1: {}", checks.exp3_lt_exp1);
    let _ = writeln!(comparison, "exp1<exp2: {}", checks.exp1_lt_exp2);
    let _ = writeln!(comparison, "exp2>=2*exp3: {}", checks.exp2_ge_2x_exp3);
    let _ = writeln!(comparison, "exp3_collisions: {}", checks.exp3_collisions);
    Ok(SuiteReport { outputs, comparison, checks })
}
