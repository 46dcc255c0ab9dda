use std::collections::HashMap;

use crate::error::Result;
use crate::geometry::{Aabb, Point3, Segment3, VoxelKey};
use crate::perception::PointCloud;

use super::{forward_kinematics, JointConfig, KinematicChain};

/// Finite link cylinder with spherical joint caps: the swept volume is every
/// point within `radius` of the axis segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderModel {
    pub axis: Segment3,
    pub radius: f64,
}

impl CylinderModel {
    pub fn contains(&self, p: &Point3) -> bool {
        self.axis.distance_to_point(p) <= self.radius
    }

    pub fn distance_to_point(&self, p: &Point3) -> f64 {
        (self.axis.distance_to_point(p) - self.radius).max(0.0)
    }

    pub fn distance_to_aabb(&self, aabb: &Aabb) -> f64 {
        (segment_aabb_distance(&self.axis, aabb).0 - self.radius).max(0.0)
    }
}

/// Minimum distance between a segment and a box, with the normalized segment
/// parameter realizing it. The distance along the segment is convex, so a
/// ternary search pins the minimizer.
fn segment_aabb_distance(seg: &Segment3, aabb: &Aabb) -> (f64, f64) {
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..70 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if aabb.distance_to_point(&seg.point_at(m1)) < aabb.distance_to_point(&seg.point_at(m2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mut best = ((lo + hi) / 2.0, aabb.distance_to_point(&seg.point_at((lo + hi) / 2.0)));
    for t in [0.0, 1.0] {
        let d = aabb.distance_to_point(&seg.point_at(t));
        if d < best.1 {
            best = (t, d);
        }
    }
    (best.1, best.0)
}

/// One collision cylinder per link, spanning consecutive link frame origins,
/// each inflated by `expansion`.
pub fn link_cylinders(
    chain: &KinematicChain,
    q: &JointConfig,
    expansion: f64,
) -> Result<Vec<CylinderModel>> {
    assert!(expansion >= 0.0, "expansion must be non-negative");
    let frames = forward_kinematics(chain, q)?;
    let mut cylinders = Vec::with_capacity(6);
    let mut prev = Point3::origin();
    for (frame, radius) in frames.iter().zip(&chain.link_radii) {
        let end = Point3::from(frame.translation);
        cylinders.push(CylinderModel {
            axis: Segment3::new(prev, end),
            radius: radius + expansion,
        });
        prev = end;
    }
    Ok(cylinders)
}

/// Renderable robot surface: one finite cylinder per link plus spheres
/// closing the joints, for ray casting the robot into simulated depth
/// frames. Every surface point lies within the matching swept volume.
pub fn body_shapes(cylinders: &[CylinderModel]) -> Vec<crate::geometry::Shape> {
    use crate::geometry::Shape;
    let mut shapes = Vec::with_capacity(cylinders.len() * 2 + 1);
    if let Some(first) = cylinders.first() {
        shapes.push(Shape::Sphere {
            center: first.axis.start,
            radius: first.radius,
        });
    }
    for cyl in cylinders {
        shapes.push(Shape::Cylinder {
            axis: cyl.axis,
            radius: cyl.radius,
        });
        shapes.push(Shape::Sphere {
            center: cyl.axis.end,
            radius: cyl.radius,
        });
    }
    shapes
}

/// Self filter: drops every point lying inside any of the robot cylinders.
/// The cloud must already be in the robot-base frame.
pub fn remove_robot_points(cloud: &PointCloud, cylinders: &[CylinderModel]) -> PointCloud {
    PointCloud {
        frame: cloud.frame.clone(),
        timestamp: cloud.timestamp,
        points: cloud
            .points
            .iter()
            .filter(|p| !cylinders.iter().any(|c| c.contains(p)))
            .copied()
            .collect(),
    }
}

/// Occupied voxel cubes prepared for repeated distance and collision
/// queries: boxes are grouped into coarse buckets so collision checks touch
/// only nearby cells.
pub struct VoxelObstacles {
    boxes: Vec<Aabb>,
    half_diag: f64,
    buckets: HashMap<(i32, i32, i32), Vec<u32>>,
    bucket_size: f64,
}

impl VoxelObstacles {
    pub fn new(occupied: &[VoxelKey], voxel_size: f64, origin: &Point3) -> Self {
        assert!(voxel_size > 0.0, "voxel size must be positive");
        let bucket_size = voxel_size * 4.0;
        let mut boxes = Vec::with_capacity(occupied.len());
        let mut buckets: HashMap<(i32, i32, i32), Vec<u32>> = HashMap::new();
        for (idx, key) in occupied.iter().enumerate() {
            let center = key.center(voxel_size, origin);
            boxes.push(Aabb::from_center_size(center, voxel_size));
            let b = (
                (center.x / bucket_size).floor() as i32,
                (center.y / bucket_size).floor() as i32,
                (center.z / bucket_size).floor() as i32,
            );
            buckets.entry(b).or_default().push(idx as u32);
        }
        Self {
            boxes,
            half_diag: voxel_size * 3.0_f64.sqrt() / 2.0,
            buckets,
            bucket_size,
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Minimum distance over all (cylinder, voxel) pairs plus the realizing
    /// obstacle and robot surface points. Empty sets report +infinity.
    pub fn min_distance(&self, cylinders: &[CylinderModel]) -> (f64, Point3, Point3) {
        let mut best = f64::INFINITY;
        let mut obstacle = Point3::origin();
        let mut robot = Point3::origin();
        for cyl in cylinders {
            for aabb in &self.boxes {
                // Cheap lower bound from the box center before the search.
                let center = Point3::from((aabb.min.coords + aabb.max.coords) / 2.0);
                let lb = cyl.axis.distance_to_point(&center) - self.half_diag - cyl.radius;
                if lb >= best {
                    continue;
                }
                let (axis_dist, t) = segment_aabb_distance(&cyl.axis, aabb);
                let dist = (axis_dist - cyl.radius).max(0.0);
                if dist < best {
                    best = dist;
                    let on_axis = cyl.axis.point_at(t);
                    obstacle = aabb.clamp_point(&on_axis);
                    let gap = obstacle - on_axis;
                    robot = if gap.norm() > cyl.radius {
                        on_axis + gap.normalize() * cyl.radius
                    } else {
                        obstacle
                    };
                    if best == 0.0 {
                        return (best, obstacle, robot);
                    }
                }
            }
        }
        (best, obstacle, robot)
    }

    /// True iff any cylinder touches any occupied voxel. Uses the coarse
    /// buckets and exits on the first contact.
    pub fn collides(&self, cylinders: &[CylinderModel]) -> bool {
        for cyl in cylinders {
            let lo = Point3::new(
                cyl.axis.start.x.min(cyl.axis.end.x) - cyl.radius,
                cyl.axis.start.y.min(cyl.axis.end.y) - cyl.radius,
                cyl.axis.start.z.min(cyl.axis.end.z) - cyl.radius,
            );
            let hi = Point3::new(
                cyl.axis.start.x.max(cyl.axis.end.x) + cyl.radius,
                cyl.axis.start.y.max(cyl.axis.end.y) + cyl.radius,
                cyl.axis.start.z.max(cyl.axis.end.z) + cyl.radius,
            );
            let b_lo = (
                (lo.x / self.bucket_size).floor() as i32,
                (lo.y / self.bucket_size).floor() as i32,
                (lo.z / self.bucket_size).floor() as i32,
            );
            let b_hi = (
                (hi.x / self.bucket_size).floor() as i32,
                (hi.y / self.bucket_size).floor() as i32,
                (hi.z / self.bucket_size).floor() as i32,
            );
            for bx in b_lo.0..=b_hi.0 {
                for by in b_lo.1..=b_hi.1 {
                    for bz in b_lo.2..=b_hi.2 {
                        let Some(indices) = self.buckets.get(&(bx, by, bz)) else {
                            continue;
                        };
                        for &idx in indices {
                            let aabb = &self.boxes[idx as usize];
                            let center =
                                Point3::from((aabb.min.coords + aabb.max.coords) / 2.0);
                            let lb = cyl.axis.distance_to_point(&center)
                                - self.half_diag
                                - cyl.radius;
                            if lb > 0.0 {
                                continue;
                            }
                            if segment_aabb_distance(&cyl.axis, aabb).0 <= cyl.radius {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }
}

/// One-shot minimum distance between robot cylinders and occupied voxels;
/// see [`VoxelObstacles::min_distance`].
pub fn min_distance_to_voxels(
    cylinders: &[CylinderModel],
    occupied: &[VoxelKey],
    voxel_size: f64,
    origin: &Point3,
) -> (f64, Point3, Point3) {
    VoxelObstacles::new(occupied, voxel_size, origin).min_distance(cylinders)
}

/// One-shot whole-body collision test against occupied voxels.
pub fn in_collision(
    cylinders: &[CylinderModel],
    occupied: &[VoxelKey],
    voxel_size: f64,
    origin: &Point3,
) -> bool {
    VoxelObstacles::new(occupied, voxel_size, origin).collides(cylinders)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z_cylinder(radius: f64) -> CylinderModel {
        CylinderModel {
            axis: Segment3::new(Point3::origin(), Point3::new(0.0, 0.0, 1.0)),
            radius,
        }
    }

    #[test]
    fn self_filter_removes_inside_keeps_outside() {
        let cyl = z_cylinder(0.055);
        let cloud = PointCloud::new(
            "base",
            0.0,
            vec![Point3::new(0.05, 0.0, 0.5), Point3::new(0.1, 0.0, 0.5)],
        );
        let out = remove_robot_points(&cloud, &[cyl]);
        assert_eq!(out.points, vec![Point3::new(0.1, 0.0, 0.5)]);
        let untouched = remove_robot_points(&cloud, &[]);
        assert_eq!(untouched.points, cloud.points);
    }

    #[test]
    fn link_cylinders_expansion_adds_to_radius() {
        let chain = KinematicChain::ur5();
        let q = JointConfig::zeros();
        let bare = link_cylinders(&chain, &q, 0.0).unwrap();
        let fat = link_cylinders(&chain, &q, 0.005).unwrap();
        assert_eq!(bare.len(), 6);
        for (b, f) in bare.iter().zip(&fat) {
            assert!((f.radius - b.radius - 0.005).abs() < 1e-12);
            assert_eq!(b.axis, f.axis);
        }
    }

    #[test]
    fn cylinders_move_rigidly_under_base_rotation() {
        let chain = KinematicChain::ur5();
        let q0 = JointConfig([0.0, -1.0, 1.2, 0.3, 0.4, 0.1]);
        let mut q1 = q0;
        q1.0[0] = 1.3;
        let a = link_cylinders(&chain, &q0, 0.0).unwrap();
        let b = link_cylinders(&chain, &q1, 0.0).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            assert!((ca.axis.length() - cb.axis.length()).abs() < 1e-12);
            assert!((ca.axis.start.coords.norm() - cb.axis.start.coords.norm()).abs() < 1e-12);
            assert!((ca.axis.end.coords.norm() - cb.axis.end.coords.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_to_voxel_cube_matches_hand_value() {
        // Thin vertical cylinder of radius 0.05; one 0.05 voxel centered
        // 1.0 m away along x: 1.0 - 0.05 - 0.025 = 0.925.
        let cyl = z_cylinder(0.05);
        let origin = Point3::origin();
        let key = crate::geometry::voxel_key_of(&Point3::new(1.0, 0.0, 0.5), 0.05, &origin);
        let center = key.center(0.05, &origin);
        let occupied = [key];
        let (d, obstacle, robot) = min_distance_to_voxels(&[cyl], &occupied, 0.05, &origin);
        let expected = (center.x - 0.025) - 0.05;
        assert!((d - expected).abs() < 1e-9, "got {d}, want {expected}");
        assert!((obstacle.x - (center.x - 0.025)).abs() < 1e-9);
        assert!((robot.x - 0.05).abs() < 1e-9);
        assert!((obstacle - robot).norm() - d < 1e-9);
    }

    #[test]
    fn empty_map_reports_infinity_and_no_collision() {
        let cyl = z_cylinder(0.05);
        let origin = Point3::origin();
        let (d, _, _) = min_distance_to_voxels(&[cyl], &[], 0.05, &origin);
        assert!(d.is_infinite());
        assert!(!in_collision(&[cyl], &[], 0.05, &origin));
    }

    #[test]
    fn penetrating_voxel_collides_at_zero_distance() {
        let cyl = z_cylinder(0.05);
        let origin = Point3::origin();
        let key = crate::geometry::voxel_key_of(&Point3::new(0.0, 0.0, 0.5), 0.05, &origin);
        let (d, _, _) = min_distance_to_voxels(&[cyl], &[key], 0.05, &origin);
        assert_eq!(d, 0.0);
        assert!(in_collision(&[cyl], &[key], 0.05, &origin));
        let far = crate::geometry::voxel_key_of(&Point3::new(0.0, 0.5, 0.5), 0.05, &origin);
        assert!(!in_collision(&[cyl], &[far], 0.05, &origin));
    }

    #[test]
    fn self_filter_removes_rendered_robot_surface() {
        use crate::geometry::{RigidTransform, Vector3};
        use crate::perception::{simulate_depth_frame, CameraModel};
        use rand::SeedableRng;

        let chain = KinematicChain::ur5();
        let q = JointConfig([0.4, -1.1, 1.3, -0.5, 0.6, 0.2]);
        let shapes = body_shapes(&link_cylinders(&chain, &q, 0.0).unwrap());
        let camera = CameraModel {
            name: "cam".into(),
            resolution: (160, 120),
            hfov: 1.0,
            vfov: 0.8,
            max_range: 5.0,
            noise_sigma: 0.0,
            fps: 15.0,
        };
        let pose = RigidTransform::looking_at(
            Point3::new(1.4, 0.9, 0.8),
            Point3::new(0.0, 0.0, 0.4),
            Vector3::z(),
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let frame = simulate_depth_frame(&camera, &pose, &shapes, 0.0, &mut rng);
        assert!(frame.len() > 500, "robot not visible: {} points", frame.len());
        let in_base = frame.transformed(&pose, "base");
        let filter = link_cylinders(&chain, &q, 0.005).unwrap();
        let filtered = remove_robot_points(&in_base, &filter);
        let residual = filtered.len() as f64 / in_base.len() as f64;
        assert!(residual <= 0.01, "residual fraction {residual}");
    }

    #[test]
    fn min_distance_matches_dense_axis_sampling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let origin = Point3::origin();
        for _ in 0..50 {
            let axis = Segment3::new(
                Point3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(0.0..0.8),
                ),
                Point3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(0.0..0.8),
                ),
            );
            let cyl = CylinderModel { axis, radius: rng.gen_range(0.02..0.1) };
            let keys: Vec<VoxelKey> = (0..10)
                .map(|_| {
                    crate::geometry::voxel_key_of(
                        &Point3::new(
                            rng.gen_range(-0.8..0.8),
                            rng.gen_range(-0.8..0.8),
                            rng.gen_range(-0.2..1.0),
                        ),
                        0.05,
                        &origin,
                    )
                })
                .collect();
            let (fast, _, _) = min_distance_to_voxels(&[cyl], &keys, 0.05, &origin);
            let mut brute = f64::INFINITY;
            for key in &keys {
                let aabb = Aabb::from_center_size(key.center(0.05, &origin), 0.05);
                for s in 0..=2000 {
                    let p = axis.point_at(s as f64 / 2000.0);
                    brute = brute.min((aabb.distance_to_point(&p) - cyl.radius).max(0.0));
                }
            }
            assert!((fast - brute).abs() < 1e-3, "fast {fast} brute {brute}");
        }
    }
}
