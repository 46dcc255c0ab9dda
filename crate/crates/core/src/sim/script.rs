//! Scripted obstacle motion: every script kind compiles to a timed waypoint
//! track over a canonical shape, so the tick loop only ever interpolates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, Segment3, Shape, Vector3};
use crate::robot::CylinderModel;

/// Canonical obstacle shape centered at the origin, described by dimensions
/// only so it can be posed anywhere along a track.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    /// Axis-aligned box with the given half side lengths.
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
    /// Vertical cylinder of the given total height, centered on its axis.
    Cylinder { radius: f64, height: f64 },
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ShapeSpec::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0),
            ShapeSpec::Sphere { radius } => *radius > 0.0,
            ShapeSpec::Cylinder { radius, height } => *radius > 0.0 && *height > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Scenario("obstacle shape dimensions must be positive".into()))
        }
    }

    /// Instantiates the shape with its center translated to `at`.
    pub fn posed(&self, at: &Vector3) -> Shape {
        match self {
            ShapeSpec::Box { half_extents } => Shape::Box {
                pose: RigidTransform::from_translation(*at),
                half_extents: Vector3::new(half_extents[0], half_extents[1], half_extents[2]),
            },
            ShapeSpec::Sphere { radius } => Shape::Sphere {
                center: Point3::new(at.x, at.y, at.z),
                radius: *radius,
            },
            ShapeSpec::Cylinder { radius, height } => Shape::Cylinder {
                axis: Segment3::new(
                    Point3::new(at.x, at.y, at.z - height / 2.0),
                    Point3::new(at.x, at.y, at.z + height / 2.0),
                ),
                radius: *radius,
            },
        }
    }
}

/// Motion program for one obstacle. Stochastic kinds draw every sample from
/// the seeded stream handed to `compile`, so a scenario seed pins the whole
/// schedule ahead of time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptSpec {
    /// Fixed position for the whole run.
    Static { position: [f64; 3] },
    /// Piecewise-linear track through timed positions.
    Waypoints {
        times: Vec<f64>,
        positions: Vec<[f64; 3]>,
        #[serde(default)]
        looped: bool,
        /// Intervals (start, end) during which the obstacle exists; empty
        /// means always present.
        #[serde(default)]
        visible: Vec<[f64; 2]>,
    },
    /// Concentric horizontal circles traced one after another, the whole
    /// sequence repeating.
    Circle {
        center: [f64; 3],
        radii: Vec<f64>,
        durations: Vec<f64>,
        #[serde(default = "default_repetitions")]
        repetitions: u32,
    },
    /// Obstacle that repeatedly enters a dwell zone from a parking point,
    /// lingers, and retreats; entry gaps are exponential, dwell lengths
    /// uniform, and positions carry a little jitter.
    RandomZone {
        zone: [f64; 3],
        out: [f64; 3],
        speed: f64,
        entry_mean: f64,
        dwell: [f64; 2],
        jitter: f64,
        horizon: f64,
        #[serde(default)]
        first_entry: f64,
    },
    /// Single fast excursion toward a fixed target from a random direction,
    /// mimicking a hand reaching into the workspace.
    Lunge {
        target: [f64; 3],
        azimuth_center: f64,
        azimuth_spread: f64,
        elevation_spread: f64,
        trigger: f64,
        distance: f64,
        speed: f64,
        hold: f64,
    },
}

fn default_repetitions() -> u32 {
    1
}

/// Closing-lap waypoints reuse the lap start time plus this offset so track
/// times stay strictly increasing without placing a tick inside the jump.
const TIME_EPS: f64 = 1e-6;

/// Samples per traced circle; 180 keeps chord error under a millimeter at
/// the radii used here.
const CIRCLE_SAMPLES: usize = 180;

/// A compiled obstacle: canonical shape plus a timed track and visibility
/// windows. All randomness was consumed at compile time.
#[derive(Clone, Debug)]
pub struct ObstacleScript {
    pub name: String,
    pub shape: ShapeSpec,
    /// (time, center position), times strictly increasing.
    pub track: Vec<(f64, Vector3)>,
    /// When set, track lookup wraps modulo this period.
    pub loop_period: Option<f64>,
    /// Absolute-time windows during which the obstacle exists; empty means
    /// always visible.
    pub visibility: Vec<(f64, f64)>,
}

impl ObstacleScript {
    pub fn compile(
        name: &str,
        shape: &ShapeSpec,
        script: &ScriptSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        shape.validate()?;
        let (track, loop_period, visibility) = match script {
            ScriptSpec::Static { position } => {
                (vec![(0.0, vec3(position))], None, Vec::new())
            }
            ScriptSpec::Waypoints { times, positions, looped, visible } => {
                if times.len() != positions.len() || times.is_empty() {
                    return Err(Error::Scenario(format!(
                        "obstacle {name}: times and positions must be non-empty and equal length"
                    )));
                }
                let track: Vec<_> =
                    times.iter().zip(positions).map(|(t, p)| (*t, vec3(p))).collect();
                let period = looped.then(|| times[times.len() - 1]);
                let vis = visible.iter().map(|w| (w[0], w[1])).collect();
                (track, period, vis)
            }
            ScriptSpec::Circle { center, radii, durations, repetitions } => {
                if radii.len() != durations.len() || radii.is_empty() {
                    return Err(Error::Scenario(format!(
                        "obstacle {name}: radii and durations must be non-empty and equal length"
                    )));
                }
                if *repetitions == 0 {
                    return Err(Error::Scenario(format!("obstacle {name}: repetitions must be >= 1")));
                }
                let c = vec3(center);
                let mut track = Vec::new();
                let mut t0 = 0.0;
                for (r, dur) in radii.iter().zip(durations) {
                    for i in 0..CIRCLE_SAMPLES {
                        let frac = i as f64 / CIRCLE_SAMPLES as f64;
                        let theta = std::f64::consts::TAU * frac;
                        track.push((t0 + frac * dur, circle_point(&c, *r, theta)));
                    }
                    // Close the lap just before the next one starts.
                    track.push((t0 + dur - TIME_EPS, circle_point(&c, *r, 0.0)));
                    t0 += dur;
                }
                (track, Some(t0), Vec::new())
            }
            ScriptSpec::RandomZone {
                zone,
                out,
                speed,
                entry_mean,
                dwell,
                jitter,
                horizon,
                first_entry,
            } => {
                if *speed <= 0.0 || *entry_mean <= 0.0 || dwell[0] > dwell[1] || dwell[0] < 0.0 {
                    return Err(Error::Scenario(format!("obstacle {name}: bad random_zone parameters")));
                }
                compile_random_zone(
                    &vec3(zone),
                    &vec3(out),
                    *speed,
                    *entry_mean,
                    *dwell,
                    *jitter,
                    *horizon,
                    *first_entry,
                    rng,
                )
            }
            ScriptSpec::Lunge {
                target,
                azimuth_center,
                azimuth_spread,
                elevation_spread,
                trigger,
                distance,
                speed,
                hold,
            } => {
                if *speed <= 0.0 || *distance <= 0.0 {
                    return Err(Error::Scenario(format!("obstacle {name}: bad lunge parameters")));
                }
                let az = azimuth_center + rng.gen_range(-azimuth_spread..=*azimuth_spread);
                let el = rng.gen_range(-elevation_spread..=*elevation_spread);
                let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                let tgt = vec3(target);
                let spawn = tgt + dir * *distance;
                let travel = distance / speed;
                let t1 = trigger + travel;
                let t2 = t1 + hold;
                let t3 = t2 + travel;
                let track = vec![(*trigger, spawn), (t1, tgt), (t2, tgt), (t3, spawn)];
                (track, None, vec![(*trigger, t3)])
            }
        };
        for pair in track.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Scenario(format!(
                    "obstacle {name}: track times must be strictly increasing"
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            shape: *shape,
            track,
            loop_period,
            visibility,
        })
    }

    pub fn visible(&self, t: f64) -> bool {
        self.visibility.is_empty() || self.visibility.iter().any(|(a, b)| t >= *a && t <= *b)
    }

    /// Center position at absolute time `t`, clamping outside the track and
    /// wrapping when the script loops.
    pub fn position(&self, t: f64) -> Vector3 {
        let local = match self.loop_period {
            Some(p) if p > 0.0 => t.rem_euclid(p),
            _ => t,
        };
        let track = &self.track;
        if local <= track[0].0 {
            return track[0].1;
        }
        let last = track.len() - 1;
        if local >= track[last].0 {
            return track[last].1;
        }
        let idx = track.partition_point(|(wt, _)| *wt <= local);
        let (t0, p0) = track[idx - 1];
        let (t1, p1) = track[idx];
        let s = (local - t0) / (t1 - t0);
        p0 + (p1 - p0) * s
    }

    /// World shape at time `t`, or None while the obstacle is out of the
    /// scene.
    pub fn shape_at(&self, t: f64) -> Option<Shape> {
        self.visible(t).then(|| self.shape.posed(&self.position(t)))
    }
}

fn vec3(a: &[f64; 3]) -> Vector3 {
    Vector3::new(a[0], a[1], a[2])
}

fn circle_point(center: &Vector3, radius: f64, theta: f64) -> Vector3 {
    Vector3::new(center.x + radius * theta.cos(), center.y + radius * theta.sin(), center.z)
}

#[allow(clippy::too_many_arguments)]
fn compile_random_zone(
    zone: &Vector3,
    out: &Vector3,
    speed: f64,
    entry_mean: f64,
    dwell: [f64; 2],
    jitter: f64,
    horizon: f64,
    first_entry: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<(f64, Vector3)>, Option<f64>, Vec<(f64, f64)>) {
    let noise = Normal::new(0.0, jitter.max(1e-9)).expect("jitter is finite");
    let travel = (*zone - *out).norm() / speed;
    let mut track = Vec::new();
    let mut windows = Vec::new();
    // First gap includes the fixed lead-in so early ticks see an empty zone.
    let mut t = first_entry + exp_sample(entry_mean, rng);
    while t < horizon {
        let target = *zone
            + Vector3::new(noise.sample(rng), noise.sample(rng), 0.5 * noise.sample(rng));
        let dwell_len = rng.gen_range(dwell[0]..=dwell[1]);
        let t_arrive = t + travel;
        let t_leave = t_arrive + dwell_len;
        let t_gone = t_leave + travel;
        track.push((t, *out));
        track.push((t_arrive, target));
        track.push((t_leave, target));
        track.push((t_gone, *out));
        windows.push((t, t_gone));
        t = t_gone + exp_sample(entry_mean, rng);
    }
    if track.is_empty() {
        track.push((0.0, *out));
    }
    (track, None, windows)
}

fn exp_sample(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -mean * u.ln()
}

/// Signed clearance between the robot's collision cylinders and a shape;
/// zero or negative means contact. Box clearance is exact, sphere clearance
/// is exact, and cylinder clearance treats the obstacle as a capsule, which
/// under-reports by at most its radius near the flat caps (conservative).
pub fn body_shape_clearance(cylinders: &[CylinderModel], shape: &Shape) -> f64 {
    let mut best = f64::INFINITY;
    for cyl in cylinders {
        let d = match shape {
            Shape::Sphere { center, radius } => {
                cyl.axis.distance_to_point(center) - cyl.radius - radius
            }
            Shape::Box { pose, half_extents } => {
                let center = pose.apply(&Point3::new(0.0, 0.0, 0.0));
                let aabb = crate::geometry::Aabb::new(center - half_extents, center + half_extents);
                cyl.distance_to_aabb(&aabb)
            }
            Shape::Cylinder { axis, radius } => {
                cyl.axis.distance_to_segment(axis) - cyl.radius - radius
            }
        };
        best = best.min(d);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn static_script_holds_position() {
        let s = ObstacleScript::compile(
            "block",
            &ShapeSpec::Box { half_extents: [0.1, 0.1, 0.1] },
            &ScriptSpec::Static { position: [1.0, 2.0, 3.0] },
            &mut rng(),
        )
        .unwrap();
        assert_eq!(s.position(0.0), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(s.position(99.0), Vector3::new(1.0, 2.0, 3.0));
        assert!(s.visible(50.0));
    }

    #[test]
    fn waypoint_interpolation_is_linear() {
        let s = ObstacleScript::compile(
            "mover",
            &ShapeSpec::Sphere { radius: 0.05 },
            &ScriptSpec::Waypoints {
                times: vec![0.0, 2.0],
                positions: vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
                looped: false,
                visible: vec![],
            },
            &mut rng(),
        )
        .unwrap();
        assert!((s.position(1.0).x - 1.0).abs() < 1e-12);
        assert!((s.position(0.5).x - 0.5).abs() < 1e-12);
        assert_eq!(s.position(5.0).x, 2.0);
    }

    #[test]
    fn nonmonotonic_times_rejected() {
        let err = ObstacleScript::compile(
            "bad",
            &ShapeSpec::Sphere { radius: 0.05 },
            &ScriptSpec::Waypoints {
                times: vec![0.0, 1.0, 1.0],
                positions: vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
                looped: false,
                visible: vec![],
            },
            &mut rng(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn circle_loops_and_stays_on_radius() {
        let s = ObstacleScript::compile(
            "ring",
            &ShapeSpec::Cylinder { radius: 0.1, height: 0.1 },
            &ScriptSpec::Circle {
                center: [0.0, 0.0, 0.5],
                radii: vec![0.2, 0.4],
                durations: vec![2.0, 4.0],
                repetitions: 3,
            },
            &mut rng(),
        )
        .unwrap();
        assert_eq!(s.loop_period, Some(6.0));
        for &t in &[0.1, 1.3, 2.5, 5.9, 7.3, 11.9] {
            let p = s.position(t);
            let r = (p.x * p.x + p.y * p.y).sqrt();
            let local = t % 6.0;
            let expect = if local < 2.0 { 0.2 } else { 0.4 };
            assert!(
                (r - expect).abs() < 0.02,
                "t={t} local={local} r={r} expect={expect}"
            );
            assert!((p.z - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn random_zone_schedule_is_seeded_and_windowed() {
        let spec = ScriptSpec::RandomZone {
            zone: [0.5, 0.0, 0.3],
            out: [0.5, 0.0, 1.5],
            speed: 0.7,
            entry_mean: 3.0,
            dwell: [2.0, 4.0],
            jitter: 0.03,
            horizon: 60.0,
            first_entry: 2.0,
        };
        let shape = ShapeSpec::Box { half_extents: [0.06, 0.1, 0.14] };
        let a = ObstacleScript::compile("box", &shape, &spec, &mut rng()).unwrap();
        let b = ObstacleScript::compile("box", &shape, &spec, &mut rng()).unwrap();
        assert_eq!(a.track, b.track);
        assert!(!a.visibility.is_empty());
        let (start, end) = a.visibility[0];
        assert!(start >= 2.0);
        assert!(a.shape_at(start - 0.1).is_none());
        assert!(a.shape_at((start + end) / 2.0).is_some());
        // Mid-dwell the box sits near the zone center.
        let mid = a.position((start + end) / 2.0);
        assert!((mid - Vector3::new(0.5, 0.0, 0.3)).norm() < 0.15);
    }

    #[test]
    fn lunge_spawns_at_distance_and_returns() {
        let spec = ScriptSpec::Lunge {
            target: [0.45, -0.35, 0.35],
            azimuth_center: -0.66,
            azimuth_spread: 1.0,
            elevation_spread: 0.3,
            trigger: 1.5,
            distance: 0.6,
            speed: 1.0,
            hold: 0.3,
        };
        let s = ObstacleScript::compile(
            "hand",
            &ShapeSpec::Sphere { radius: 0.05 },
            &spec,
            &mut rng(),
        )
        .unwrap();
        assert!(!s.visible(1.4));
        let spawn = s.position(1.5);
        let tgt = Vector3::new(0.45, -0.35, 0.35);
        assert!(((spawn - tgt).norm() - 0.6).abs() < 1e-9);
        // Arrives at the target after distance / speed.
        assert!((s.position(2.1) - tgt).norm() < 1e-9);
        // Holds, then retreats back to the spawn point.
        assert!((s.position(2.3) - tgt).norm() < 1e-9);
        assert!((s.position(3.0) - spawn).norm() < 1e-9);
        assert!(!s.visible(3.1));
    }

    #[test]
    fn clearance_signs_match_geometry() {
        let cyl = CylinderModel {
            axis: Segment3::new(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 1.0)),
            radius: 0.05,
        };
        let far = ShapeSpec::Sphere { radius: 0.1 }.posed(&Vector3::new(1.0, 0.0, 0.5));
        assert!((body_shape_clearance(&[cyl], &far) - 0.85).abs() < 1e-12);
        let touching = ShapeSpec::Sphere { radius: 0.1 }.posed(&Vector3::new(0.15, 0.0, 0.5));
        assert!(body_shape_clearance(&[cyl], &touching).abs() < 1e-12);
        let inside = ShapeSpec::Sphere { radius: 0.1 }.posed(&Vector3::new(0.1, 0.0, 0.5));
        assert!(body_shape_clearance(&[cyl], &inside) < 0.0);
        let boxed = ShapeSpec::Box { half_extents: [0.1, 0.1, 0.1] }
            .posed(&Vector3::new(0.5, 0.0, 0.5));
        assert!((body_shape_clearance(&[cyl], &boxed) - 0.35).abs() < 1e-9);
    }
}
