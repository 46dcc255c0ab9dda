use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{NeighborIndex, Point3, RigidTransform, Vector3};

use super::PointCloud;

/// Point-to-point iterative closest point. Refines `initial` so that it maps
/// `source` onto `target`, alternating nearest-neighbor correspondences with
/// a closed-form SVD rigid estimate. Stops when the RMS correspondence error
/// improves by less than `tol` or after `max_iter` iterations. Returns the
/// refined transform and the final RMS error.
///
/// Assumes full overlap and an initial guess close to the true alignment;
/// there is no correspondence rejection.
pub fn icp_refine(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    max_iter: usize,
    tol: f64,
) -> Result<(RigidTransform, f64)> {
    check_non_degenerate(&source.points)?;
    check_non_degenerate(&target.points)?;
    let index = NeighborIndex::build(target.points.clone());

    let mut current = *initial;
    let mut prev_rms = f64::INFINITY;
    let mut rms = f64::INFINITY;
    for _ in 0..max_iter {
        let moved: Vec<Point3> = source.points.iter().map(|p| current.apply(p)).collect();
        let paired: Vec<Point3> = moved
            .iter()
            .map(|p| {
                let nearest = index.knn(p, 1).expect("target cloud is non-empty")[0];
                *index.point(nearest)
            })
            .collect();
        let sq_sum: f64 = moved
            .iter()
            .zip(&paired)
            .map(|(m, t)| (t - m).norm_squared())
            .sum();
        rms = (sq_sum / moved.len() as f64).sqrt();
        if rms == 0.0 || prev_rms - rms < tol {
            break;
        }
        prev_rms = rms;
        current = rigid_estimate(&moved, &paired).compose(&current);
    }
    Ok((current, rms))
}

/// Closed-form least-squares rigid transform mapping `source` points onto
/// their paired `target` points (Kabsch/Umeyama without scale).
fn rigid_estimate(source: &[Point3], target: &[Point3]) -> RigidTransform {
    let n = source.len() as f64;
    let mu_s: Vector3 = source.iter().map(|p| p.coords).sum::<Vector3>() / n;
    let mu_t: Vector3 = target.iter().map(|p| p.coords).sum::<Vector3>() / n;
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s.coords - mu_s) * (t.coords - mu_t).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd of 3x3 always yields u");
    let v_t = svd.v_t.expect("svd of 3x3 always yields v_t");
    let mut v = v_t.transpose();
    if (v * u.transpose()).determinant() < 0.0 {
        // Reflection case: flip the singular direction with least support.
        let weakest = svd.singular_values.imin();
        v.column_mut(weakest).scale_mut(-1.0);
    }
    let rotation = v * u.transpose();
    RigidTransform::new(rotation, mu_t - rotation * mu_s)
}

/// Errors unless the cloud has at least three non-collinear points, measured
/// by the second singular value of the centered covariance.
fn check_non_degenerate(points: &[Point3]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(
            "point cloud needs at least three points",
        ));
    }
    let n = points.len() as f64;
    let mu: Vector3 = points.iter().map(|p| p.coords).sum::<Vector3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let c = p.coords - mu;
        cov += c * c.transpose();
    }
    let mut sv: Vec<f64> = cov
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[1] <= 1e-10 * sv[0] {
        return Err(Error::DegenerateGeometry(
            "point cloud is collinear or coincident",
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::orthonormal_drift;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_cloud() -> PointCloud {
        // Deterministic blob of points spanning all three axes.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points = (0..120)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.2..0.4),
                    rng.gen_range(0.5..1.0),
                )
            })
            .collect();
        PointCloud::new("cam", 0.0, points)
    }

    fn angle_of(r: &nalgebra::Matrix3<f64>) -> f64 {
        (((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
    }

    #[test]
    fn aligned_clouds_return_initial_and_zero_rms() {
        let cloud = sample_cloud();
        let (t, rms) = icp_refine(&cloud, &cloud, &RigidTransform::identity(), 30, 1e-8).unwrap();
        assert_eq!(t, RigidTransform::identity());
        assert_eq!(rms, 0.0);
    }

    #[test]
    fn recovers_small_translation() {
        let source = sample_cloud();
        let true_t = RigidTransform::from_translation(Vector3::new(0.01, 0.0, 0.0));
        let target = source.transformed(&true_t, "base");
        let (t, rms) =
            icp_refine(&source, &target, &RigidTransform::identity(), 30, 1e-8).unwrap();
        assert!((t.translation - true_t.translation).norm() < 1e-3);
        assert!(rms < 1e-6);
    }

    #[test]
    fn recovers_small_rotation_and_shift() {
        let source = sample_cloud();
        let true_t = RigidTransform::new(
            RigidTransform::rot_z(2.0_f64.to_radians()).rotation,
            Vector3::new(0.005, 0.0, 0.0),
        );
        let target = source.transformed(&true_t, "base");
        let (t, _) = icp_refine(&source, &target, &RigidTransform::identity(), 50, 1e-9).unwrap();
        let residual = t.compose(&true_t.inverse());
        assert!(angle_of(&residual.rotation) < 0.1_f64.to_radians());
        assert!((t.translation - true_t.translation).norm() < 1e-3);
        assert!(orthonormal_drift(&t.rotation) < 1e-9);
    }

    #[test]
    fn degenerate_clouds_are_rejected() {
        let line = PointCloud::new(
            "cam",
            0.0,
            (0..10).map(|i| Point3::new(i as f64 * 0.1, 0.0, 0.0)).collect(),
        );
        let blob = sample_cloud();
        let id = RigidTransform::identity();
        assert!(matches!(
            icp_refine(&line, &blob, &id, 10, 1e-6),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            icp_refine(&blob, &line, &id, 10, 1e-6),
            Err(Error::DegenerateGeometry(_))
        ));
        let two = PointCloud::new("cam", 0.0, vec![Point3::origin(), Point3::new(1.0, 1.0, 1.0)]);
        assert!(icp_refine(&two, &blob, &id, 10, 1e-6).is_err());
    }
}
