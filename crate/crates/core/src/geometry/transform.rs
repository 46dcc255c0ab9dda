use nalgebra::{Matrix3, Rotation3};

use super::{Point3, Vector3};

/// Largest tolerated elementwise departure of `R^T R` from identity before a
/// composed rotation is re-orthonormalized.
const ORTHONORMAL_DRIFT: f64 = 1e-9;

/// Rigid transform `p -> R p + t` mapping points from one frame to another.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: &Vector3, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        Self {
            rotation: Rotation3::from_axis_angle(&axis, angle).into_inner(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    /// Pose at `eye` whose +z axis points at `target`; `up` hints the -y
    /// (image up) direction. Used to aim simulated cameras.
    pub fn looking_at(eye: Point3, target: Point3, up: Vector3) -> Self {
        let z = (target - eye).normalize();
        let mut x = up.cross(&z);
        if x.norm() < 1e-12 {
            // Degenerate up direction: pick any axis orthogonal to z.
            x = if z.x.abs() < 0.9 {
                Vector3::x().cross(&z)
            } else {
                Vector3::y().cross(&z)
            };
        }
        let x = x.normalize();
        let y = z.cross(&x);
        Self {
            rotation: Matrix3::from_columns(&[x, y, z]),
            translation: eye.coords,
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation * v
    }

    /// Composition `self * other`: applying the result equals applying
    /// `other` first, then `self`. Rotations are re-orthonormalized when
    /// accumulated floating point drift exceeds a small threshold.
    pub fn compose(&self, other: &Self) -> Self {
        let mut rotation = self.rotation * other.rotation;
        if orthonormal_drift(&rotation) > ORTHONORMAL_DRIFT {
            rotation = orthonormalize(&rotation);
        }
        Self {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Elementwise max of `|R^T R - I|`, plus any departure of `det R` from +1.
pub(crate) fn orthonormal_drift(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    let drift = gram.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    drift.max((r.determinant() - 1.0).abs())
}

/// Nearest orthonormal matrix with positive determinant (polar factor).
pub(crate) fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd of 3x3 always yields u");
    let v_t = svd.v_t.expect("svd of 3x3 always yields v_t");
    let mut q = u * v_t;
    if q.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).scale_mut(-1.0);
        q = u * v_t;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_leaves_points_unchanged() {
        let p = Point3::new(0.3, -1.2, 7.0);
        assert_eq!(RigidTransform::identity().apply(&p), p);
    }

    #[test]
    fn two_quarter_turns_about_z_flip_x() {
        let quarter = RigidTransform::rot_z(FRAC_PI_2);
        let half = quarter.compose(&quarter);
        let p = half.apply(&Point3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p.x, -1.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = RigidTransform::rot_y(0.83).compose(&RigidTransform::from_translation(
            Vector3::new(0.4, -0.2, 1.1),
        ));
        let round = t.compose(&t.inverse());
        assert!(orthonormal_drift(&round.rotation) < 1e-12);
        assert!(round.translation.norm() < 1e-12);
        let p = Point3::new(-0.7, 0.33, 0.9);
        let q = t.inverse().apply(&t.apply(&p));
        assert_relative_eq!((q - p).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn long_composition_chain_stays_orthonormal() {
        let step = RigidTransform::from_axis_angle(&Vector3::new(0.3, 1.0, -0.2), 0.013);
        let mut acc = RigidTransform::identity();
        for _ in 0..100_000 {
            acc = acc.compose(&step);
        }
        assert!(orthonormal_drift(&acc.rotation) <= 1e-9);
    }

    #[test]
    fn looking_at_points_z_axis_at_target() {
        let eye = Point3::new(1.0, 2.0, 0.5);
        let target = Point3::new(0.0, 0.0, 0.5);
        let t = RigidTransform::looking_at(eye, target, Vector3::z());
        let z = t.apply_vector(&Vector3::z());
        let expect = (target - eye).normalize();
        assert_relative_eq!((z - expect).norm(), 0.0, epsilon = 1e-12);
        assert!(orthonormal_drift(&t.rotation) < 1e-12);
    }
}
