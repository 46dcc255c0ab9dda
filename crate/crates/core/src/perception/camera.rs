use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{ray_cast, Point3, Ray, RigidTransform, Shape, Vector3};

use super::PointCloud;

/// Pinhole depth camera model. The optical frame follows the usual depth
/// sensor convention: +z forward along the optical axis, +x right, +y down.
#[derive(Clone, Debug)]
pub struct CameraModel {
    pub name: String,
    /// Pixels (width, height).
    pub resolution: (u32, u32),
    /// Horizontal and vertical field of view in radians.
    pub hfov: f64,
    pub vfov: f64,
    /// Hits beyond this range are discarded (meters).
    pub max_range: f64,
    /// Standard deviation of Gaussian noise applied along each ray (meters).
    pub noise_sigma: f64,
    /// Frame rate of the stream in frames per second.
    pub fps: f64,
}

/// Renders one depth frame by casting a ray through every pixel center in
/// row-major order and reporting hit points in the camera frame.
///
/// `pose` maps the camera frame to the world. Range gating uses the true hit
/// distance; noise then perturbs the point along the ray, so a zero-sigma
/// camera reproduces surfaces exactly.
pub fn simulate_depth_frame(
    camera: &CameraModel,
    pose: &RigidTransform,
    shapes: &[Shape],
    time: f64,
    rng: &mut impl Rng,
) -> PointCloud {
    let (w, h) = camera.resolution;
    let tan_h = (camera.hfov / 2.0).tan();
    let tan_v = (camera.vfov / 2.0).tan();
    let origin = pose.apply(&Point3::new(0.0, 0.0, 0.0));
    let noise = if camera.noise_sigma > 0.0 {
        Some(Normal::new(0.0, camera.noise_sigma).expect("sigma is positive and finite"))
    } else {
        None
    };
    let mut points = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let dir_cam = Vector3::new(
                (2.0 * (u as f64 + 0.5) / w as f64 - 1.0) * tan_h,
                (2.0 * (v as f64 + 0.5) / h as f64 - 1.0) * tan_v,
                1.0,
            )
            .normalize();
            let ray = Ray {
                origin,
                direction: pose.apply_vector(&dir_cam),
            };
            if let Some(hit) = ray_cast(&ray, shapes) {
                if hit.t <= camera.max_range {
                    let depth = match &noise {
                        Some(n) => hit.t + n.sample(rng),
                        None => hit.t,
                    };
                    if depth > 0.0 {
                        points.push(Point3::from(dir_cam * depth));
                    }
                }
            }
        }
    }
    PointCloud::new(camera.name.clone(), time, points)
}
