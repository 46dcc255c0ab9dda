use nalgebra::{Matrix6, Rotation3, UnitQuaternion, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vector3};

use super::{DhRow, JointConfig, KinematicChain};

/// Damping factor of the least-squares pose solver.
const DLS_LAMBDA: f64 = 0.05;
/// Largest joint-space step (rad, norm) taken per solver iteration.
const DLS_MAX_STEP: f64 = 0.3;
const DLS_MAX_ITER: usize = 300;

fn dh_transform(row: &DhRow, theta: f64) -> RigidTransform {
    RigidTransform::rot_z(theta)
        .compose(&RigidTransform::from_translation(Vector3::new(
            0.0, 0.0, row.d,
        )))
        .compose(&RigidTransform::from_translation(Vector3::new(
            row.a, 0.0, 0.0,
        )))
        .compose(&RigidTransform::rot_x(row.alpha))
}

/// Link frames in the base frame, one per joint; the last one is the
/// end-effector pose.
pub fn forward_kinematics(
    chain: &KinematicChain,
    q: &JointConfig,
) -> Result<[RigidTransform; 6]> {
    chain.check_limits(q)?;
    let mut frames = [RigidTransform::identity(); 6];
    let mut acc = RigidTransform::identity();
    for (i, frame) in frames.iter_mut().enumerate() {
        acc = acc.compose(&dh_transform(&chain.dh[i], q.0[i]));
        *frame = acc;
    }
    Ok(frames)
}

pub fn end_effector_pose(chain: &KinematicChain, q: &JointConfig) -> Result<RigidTransform> {
    Ok(forward_kinematics(chain, q)?[5])
}

/// Geometric Jacobian at `q`: linear velocity rows on top, angular below.
pub fn jacobian(chain: &KinematicChain, q: &JointConfig) -> Result<Matrix6<f64>> {
    let frames = forward_kinematics(chain, q)?;
    let p_ee = frames[5].translation;
    let mut j = Matrix6::zeros();
    for i in 0..6 {
        // Joint i rotates about the z axis of the previous frame.
        let (z, p) = if i == 0 {
            (Vector3::z(), Vector3::zeros())
        } else {
            (
                frames[i - 1].rotation.column(2).into_owned(),
                frames[i - 1].translation,
            )
        };
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&z.cross(&(p_ee - p)));
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    Ok(j)
}

/// Axis-angle vector of a rotation matrix.
fn rotation_log(r: &nalgebra::Matrix3<f64>) -> Vector3 {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r)).scaled_axis()
}

/// Damped-least-squares inverse kinematics from `seed` toward `target`,
/// stopping once position and orientation errors fall inside the tolerances.
/// Joint limits are enforced at every step.
pub fn reach_pose(
    chain: &KinematicChain,
    seed: &JointConfig,
    target: &RigidTransform,
    pos_tol: f64,
    orient_tol: f64,
) -> Result<JointConfig> {
    let mut q = *seed;
    for _ in 0..DLS_MAX_ITER {
        let ee = end_effector_pose(chain, &q)?;
        let e_pos = target.translation - ee.translation;
        let e_rot = rotation_log(&(target.rotation * ee.rotation.transpose()));
        if e_pos.norm() <= pos_tol && e_rot.norm() <= orient_tol {
            return Ok(q);
        }
        let j = jacobian(chain, &q)?;
        let mut e = Vector6::zeros();
        e.fixed_rows_mut::<3>(0).copy_from(&e_pos);
        e.fixed_rows_mut::<3>(3).copy_from(&e_rot);
        let damped = j * j.transpose() + Matrix6::identity() * (DLS_LAMBDA * DLS_LAMBDA);
        let y = damped
            .lu()
            .solve(&e)
            .expect("damped normal matrix is nonsingular");
        let mut dq = j.transpose() * y;
        let norm = dq.norm();
        if norm > DLS_MAX_STEP {
            dq *= DLS_MAX_STEP / norm;
        }
        for i in 0..6 {
            q.0[i] = (q.0[i] + dq[i]).clamp(chain.joint_limits[i][0], chain.joint_limits[i][1]);
        }
    }
    Err(Error::OutOfReach("unreachable pose"))
}
