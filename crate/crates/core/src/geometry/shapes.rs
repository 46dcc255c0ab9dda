use super::{Point3, RigidTransform, Segment3, Vector3};

/// Ray with unit direction; parameters are in world length units.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Point3,
    pub direction: Vector3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Point3, direction: Vector3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn point_at(&self, t: f64) -> Point3 {
        self.origin + self.direction * t
    }
}

/// Analytic solid used for simulated scenes and ground-truth checks.
#[derive(Clone, Debug)]
pub enum Shape {
    Sphere {
        center: Point3,
        radius: f64,
    },
    /// Oriented box; `pose` maps the box frame (centered, axis-aligned) to
    /// the world and `half_extents` are the half side lengths.
    Box {
        pose: RigidTransform,
        half_extents: Vector3,
    },
    /// Finite cylinder with flat caps around an axis segment.
    Cylinder {
        axis: Segment3,
        radius: f64,
    },
}

/// First intersection of a ray with a scene.
#[derive(Clone, Copy, Debug)]
pub struct RayHit {
    pub point: Point3,
    pub t: f64,
    pub shape: usize,
}

/// Casts `ray` against all `shapes`, returning the nearest hit with positive
/// distance, if any.
pub fn ray_cast(ray: &Ray, shapes: &[Shape]) -> Option<RayHit> {
    let mut best: Option<RayHit> = None;
    for (i, shape) in shapes.iter().enumerate() {
        if let Some(t) = shape.intersect(ray) {
            if best.is_none_or(|b| t < b.t) {
                best = Some(RayHit {
                    point: ray.point_at(t),
                    t,
                    shape: i,
                });
            }
        }
    }
    best
}

const RAY_EPS: f64 = 1e-12;

impl Shape {
    /// Smallest positive ray parameter hitting the shape surface.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        match self {
            Shape::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(&ray.direction);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sqrt = disc.sqrt();
                smallest_positive(&[-b - sqrt, -b + sqrt])
            }
            Shape::Box { pose, half_extents } => {
                let inv = pose.inverse();
                let o = inv.apply(&ray.origin);
                let d = inv.apply_vector(&ray.direction);
                // Slab test in the box frame.
                let mut t_enter = f64::NEG_INFINITY;
                let mut t_exit = f64::INFINITY;
                for a in 0..3 {
                    if d[a].abs() < RAY_EPS {
                        if o[a].abs() > half_extents[a] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-half_extents[a] - o[a]) / d[a];
                    let t2 = (half_extents[a] - o[a]) / d[a];
                    t_enter = t_enter.max(t1.min(t2));
                    t_exit = t_exit.min(t1.max(t2));
                }
                if t_enter > t_exit {
                    return None;
                }
                smallest_positive(&[t_enter, t_exit])
            }
            Shape::Cylinder { axis, radius } => {
                let h = axis.length();
                if h == 0.0 {
                    return None;
                }
                let z = (axis.end - axis.start) / h;
                let o = ray.origin - axis.start;
                let oz = o.dot(&z);
                let dz = ray.direction.dot(&z);
                let o_perp = o - z * oz;
                let d_perp = ray.direction - z * dz;
                let mut candidates = [f64::NAN; 4];
                let mut n = 0;
                // Lateral surface: |o_perp + t d_perp| = radius with z in [0, h].
                let a = d_perp.norm_squared();
                if a > RAY_EPS * RAY_EPS {
                    let b = o_perp.dot(&d_perp);
                    let c = o_perp.norm_squared() - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / a, (-b + sq) / a] {
                            let zt = oz + t * dz;
                            if (0.0..=h).contains(&zt) {
                                candidates[n] = t;
                                n += 1;
                            }
                        }
                    }
                }
                // Caps: planes z = 0 and z = h restricted to the disc.
                if dz.abs() > RAY_EPS {
                    for plane in [0.0, h] {
                        let t = (plane - oz) / dz;
                        let radial = (o_perp + d_perp * t).norm();
                        if radial <= *radius {
                            candidates[n] = t;
                            n += 1;
                        }
                    }
                }
                smallest_positive(&candidates[..n])
            }
        }
    }

    /// Signed distance to the shape surface (negative inside).
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Box { pose, half_extents } => {
                let local = pose.inverse().apply(p);
                let q = Vector3::new(
                    local.x.abs() - half_extents.x,
                    local.y.abs() - half_extents.y,
                    local.z.abs() - half_extents.z,
                );
                let outside = Vector3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
            Shape::Cylinder { axis, radius } => {
                let h = axis.length();
                let z = if h == 0.0 {
                    Vector3::z()
                } else {
                    (axis.end - axis.start) / h
                };
                let o = p - axis.start;
                let oz = o.dot(&z);
                let radial = (o - z * oz).norm();
                let dr = radial - radius;
                let dz = (-oz).max(oz - h);
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                let inside = dr.max(dz).min(0.0);
                outside + inside
            }
        }
    }

    /// Absolute distance of `p` from the shape surface; ~0 for ray hits.
    pub fn surface_residual(&self, p: &Point3) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Minimum signed distance from a segment to the shape (negative when
    /// any part of the segment is inside). Exact for spheres; for boxes and
    /// cylinders the distance along the segment is unimodal, so a ternary
    /// search converges to the minimum.
    pub fn distance_to_segment(&self, seg: &Segment3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => seg.distance_to_point(center) - radius,
            _ => {
                // The signed distance of a convex solid is convex along a
                // line; ternary search to high precision.
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                for _ in 0..100 {
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    if self.signed_distance(&seg.point_at(m1))
                        <= self.signed_distance(&seg.point_at(m2))
                    {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                let t = (lo + hi) / 2.0;
                self.signed_distance(&seg.point_at(t))
                    .min(self.signed_distance(&seg.start))
                    .min(self.signed_distance(&seg.end))
            }
        }
    }
}

fn smallest_positive(ts: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &t in ts {
        if t > RAY_EPS && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ray_hits_sphere_front_surface() {
        let ray = Ray::new(Point3::new(0.0, 0.0, 0.0), Vector3::z());
        let shapes = [Shape::Sphere {
            center: Point3::new(0.0, 0.0, 2.0),
            radius: 0.5,
        }];
        let hit = ray_cast(&ray, &shapes).unwrap();
        assert_eq!(hit.shape, 0);
        assert_relative_eq!(hit.t, 1.5, epsilon = 1e-12);
        assert_relative_eq!((hit.point - Point3::new(0.0, 0.0, 1.5)).norm(), 0.0, epsilon = 1e-12);
        assert!(shapes[0].surface_residual(&hit.point) < 1e-9);
    }

    #[test]
    fn ray_missing_everything_returns_none() {
        let ray = Ray::new(Point3::new(0.0, 0.0, 0.0), Vector3::x());
        let shapes = [Shape::Sphere {
            center: Point3::new(0.0, 0.0, 2.0),
            radius: 0.5,
        }];
        assert!(ray_cast(&ray, &shapes).is_none());
    }

    #[test]
    fn nearest_of_several_shapes_wins() {
        let ray = Ray::new(Point3::new(0.0, 0.0, 0.0), Vector3::z());
        let shapes = [
            Shape::Sphere {
                center: Point3::new(0.0, 0.0, 4.0),
                radius: 0.5,
            },
            Shape::Box {
                pose: RigidTransform::from_translation(Vector3::new(0.0, 0.0, 2.0)),
                half_extents: Vector3::new(1.0, 1.0, 0.25),
            },
        ];
        let hit = ray_cast(&ray, &shapes).unwrap();
        assert_eq!(hit.shape, 1);
        assert_relative_eq!(hit.t, 1.75, epsilon = 1e-12);
    }

    #[test]
    fn cylinder_lateral_and_cap_hits() {
        let cyl = Shape::Cylinder {
            axis: Segment3::new(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 1.0)),
            radius: 0.2,
        };
        // Sideways ray into the lateral surface.
        let side = Ray::new(Point3::new(1.0, 0.0, 0.5), -Vector3::x());
        let t = cyl.intersect(&side).unwrap();
        assert_relative_eq!(t, 0.8, epsilon = 1e-12);
        // Downward ray through the top cap.
        let top = Ray::new(Point3::new(0.05, 0.0, 2.0), -Vector3::z());
        let t = cyl.intersect(&top).unwrap();
        assert_relative_eq!(t, 1.0, epsilon = 1e-12);
        assert!(cyl.surface_residual(&top.point_at(t)) < 1e-9);
    }

    #[test]
    fn signed_distance_signs() {
        let b = Shape::Box {
            pose: RigidTransform::identity(),
            half_extents: Vector3::new(0.5, 0.5, 0.5),
        };
        assert!(b.signed_distance(&Point3::new(0.0, 0.0, 0.0)) < 0.0);
        assert_relative_eq!(
            b.signed_distance(&Point3::new(1.5, 0.0, 0.0)),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            b.signed_distance(&Point3::new(0.5, 0.0, 0.0)),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn segment_distance_matches_dense_sampling() {
        let shapes = [
            Shape::Box {
                pose: RigidTransform::rot_z(0.4).compose(&RigidTransform::from_translation(
                    Vector3::new(0.3, -0.2, 0.5),
                )),
                half_extents: Vector3::new(0.2, 0.15, 0.3),
            },
            Shape::Cylinder {
                axis: Segment3::new(Point3::new(-0.2, 0.4, 0.0), Point3::new(0.1, 0.5, 0.8)),
                radius: 0.12,
            },
            Shape::Sphere {
                center: Point3::new(0.0, -0.6, 0.2),
                radius: 0.25,
            },
        ];
        let seg = Segment3::new(Point3::new(-0.8, -0.1, 0.1), Point3::new(0.9, 0.3, 0.9));
        for shape in &shapes {
            let fast = shape.distance_to_segment(&seg);
            let mut brute = f64::INFINITY;
            for i in 0..=4000 {
                let p = seg.point_at(i as f64 / 4000.0);
                brute = brute.min(shape.signed_distance(&p));
            }
            assert!(
                (fast - brute).abs() < 1e-4,
                "dist {fast} vs dense {brute} for {shape:?}"
            );
            assert!(fast <= brute + 1e-12);
        }
    }
}
