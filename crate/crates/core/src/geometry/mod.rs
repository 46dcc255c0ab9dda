//! Shared geometric primitives: rigid transforms, nearest-neighbor queries,
//! voxel lattice traversal and analytic ray casting.

mod kdtree;
mod shapes;
mod transform;
mod traversal;

pub use kdtree::NeighborIndex;
pub use shapes::{ray_cast, Ray, RayHit, Shape};
pub use transform::RigidTransform;
#[cfg(test)]
pub(crate) use transform::orthonormal_drift;
pub use traversal::{voxel_key_of, voxel_traversal, VoxelKey};

/// 3-D point in meters.
pub type Point3 = nalgebra::Point3<f64>;

/// 3-D vector in meters (or meters per second, radians, ... by context).
pub type Vector3 = nalgebra::Vector3<f64>;

/// Line segment between two points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment3 {
    pub start: Point3,
    pub end: Point3,
}

impl Segment3 {
    pub fn new(start: Point3, end: Point3) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Point at normalized parameter `t` in `[0, 1]`.
    pub fn point_at(&self, t: f64) -> Point3 {
        self.start + (self.end - self.start) * t
    }

    /// Normalized parameter of the point on the segment closest to `p`.
    pub fn closest_param(&self, p: &Point3) -> f64 {
        let d = self.end - self.start;
        let len2 = d.norm_squared();
        if len2 == 0.0 {
            return 0.0;
        }
        ((p - self.start).dot(&d) / len2).clamp(0.0, 1.0)
    }

    pub fn distance_to_point(&self, p: &Point3) -> f64 {
        (self.point_at(self.closest_param(p)) - p).norm()
    }

    /// Minimum distance between two segments.
    pub fn distance_to_segment(&self, other: &Segment3) -> f64 {
        // Closed-form closest points between segments, with the usual
        // clamped-parameter case analysis.
        let d1 = self.end - self.start;
        let d2 = other.end - other.start;
        let r = self.start - other.start;
        let a = d1.norm_squared();
        let e = d2.norm_squared();
        let f = d2.dot(&r);
        let (s, t);
        if a == 0.0 && e == 0.0 {
            return (self.start - other.start).norm();
        }
        if a == 0.0 {
            s = 0.0;
            t = (f / e).clamp(0.0, 1.0);
        } else {
            let c = d1.dot(&r);
            if e == 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else {
                let b = d1.dot(&d2);
                let denom = a * e - b * b;
                let mut s_ = if denom != 0.0 {
                    ((b * f - c * e) / denom).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let mut t_ = (b * s_ + f) / e;
                if t_ < 0.0 {
                    t_ = 0.0;
                    s_ = (-c / a).clamp(0.0, 1.0);
                } else if t_ > 1.0 {
                    t_ = 1.0;
                    s_ = ((b - c) / a).clamp(0.0, 1.0);
                }
                s = s_;
                t = t_;
            }
        }
        (self.point_at(s) - other.point_at(t)).norm()
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    pub fn from_center_size(center: Point3, size: f64) -> Self {
        let h = Vector3::repeat(size / 2.0);
        Self {
            min: center - h,
            max: center + h,
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Closest point of the box to `p` (which is `p` itself when inside).
    pub fn clamp_point(&self, p: &Point3) -> Point3 {
        Point3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn distance_to_point(&self, p: &Point3) -> f64 {
        (self.clamp_point(p) - p).norm()
    }
}
