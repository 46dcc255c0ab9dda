//! 6-DOF serial arm model: forward kinematics over a DH chain, Jacobian
//! pose reaching, swept-volume self filtering and distance/collision queries
//! against occupied voxels.

mod body;
mod kinematics;

pub use body::{
    body_shapes, in_collision, link_cylinders, min_distance_to_voxels, remove_robot_points,
    CylinderModel, VoxelObstacles,
};
pub use kinematics::{end_effector_pose, forward_kinematics, jacobian, reach_pose};

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// One Denavit-Hartenberg row; the joint angle itself is the free variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
}

/// Fixed description of a 6-joint revolute arm: DH table, joint limits,
/// motion caps used by the executor, and per-link collision radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub dh: [DhRow; 6],
    /// Per-joint [lower, upper] bounds in radians.
    pub joint_limits: [[f64; 2]; 6],
    /// Per-joint speed cap in rad/s.
    pub max_joint_speed: f64,
    /// Per-joint acceleration cap in rad/s².
    pub max_joint_accel: f64,
    /// Collision cylinder radius of each link in meters.
    pub link_radii: [f64; 6],
}

impl KinematicChain {
    /// UR5 chain with published DH parameters. Speed and acceleration caps
    /// are half resp. 60% of the drive maxima (pi rad/s, 2 pi rad/s²).
    pub fn ur5() -> Self {
        let row = |a: f64, d: f64, alpha: f64| DhRow { a, d, alpha };
        Self {
            dh: [
                row(0.0, 0.089159, FRAC_PI_2),
                row(-0.425, 0.0, 0.0),
                row(-0.39225, 0.0, 0.0),
                row(0.0, 0.10915, FRAC_PI_2),
                row(0.0, 0.09465, -FRAC_PI_2),
                row(0.0, 0.0823, 0.0),
            ],
            joint_limits: [[-PI, PI]; 6],
            max_joint_speed: FRAC_PI_2,
            max_joint_accel: 1.2 * PI,
            link_radii: [0.06; 6],
        }
    }

    /// Errors with the offending joint if any angle is outside its limits.
    pub fn check_limits(&self, q: &JointConfig) -> Result<()> {
        for (joint, (&value, &[lo, hi])) in q.0.iter().zip(&self.joint_limits).enumerate() {
            if value < lo || value > hi {
                return Err(Error::JointOutOfLimits {
                    joint,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        self.check_limits(q).is_ok()
    }
}

/// Joint-space configuration in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointConfig(pub [f64; 6]);

impl JointConfig {
    pub fn zeros() -> Self {
        Self([0.0; 6])
    }

    /// Euclidean norm of the joint-space difference.
    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest per-joint absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Linear interpolation; `t` in `[0, 1]` runs from `self` to `other`.
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        let mut out = [0.0; 6];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] + (other.0[i] - self.0[i]) * t;
        }
        Self(out)
    }

    /// Step of at most `step` (joint-space norm) from `self` toward `other`.
    pub fn step_toward(&self, other: &Self, step: f64) -> Self {
        let d = self.distance(other);
        if d <= step {
            *other
        } else {
            self.lerp(other, step / d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_check_names_the_joint() {
        let chain = KinematicChain::ur5();
        let mut q = JointConfig::zeros();
        q.0[3] = 4.0;
        match chain.check_limits(&q) {
            Err(Error::JointOutOfLimits { joint, .. }) => assert_eq!(joint, 3),
            other => panic!("expected limit error, got {other:?}"),
        }
        assert!(chain.within_limits(&JointConfig::zeros()));
    }

    #[test]
    fn step_toward_caps_step_length() {
        let a = JointConfig::zeros();
        let b = JointConfig([1.0; 6]);
        let stepped = a.step_toward(&b, 0.1);
        assert!((stepped.distance(&a) - 0.1).abs() < 1e-12);
        let full = a.step_toward(&b, 10.0);
        assert_eq!(full, b);
    }
}
