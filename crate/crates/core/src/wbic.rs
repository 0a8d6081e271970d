//! Joint-level tracking: Jacobian-transpose torques for stance legs, inverse
//! kinematics for swing legs, and the joint PD law.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::gait::ContactState;
use crate::model::{LegId, ModelError, RobotModel};

pub type Vector12 = SVector<f64, 12>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WbicParams {
    pub torque_limit: f64,
    pub kp_stance: f64,
    pub kp_swing: f64,
    pub kd: f64,
    /// Damping used when the leg Jacobian is near singular.
    pub damping: f64,
    pub max_joint_velocity: f64,
}

impl Default for WbicParams {
    fn default() -> Self {
        Self {
            torque_limit: 17.0,
            kp_stance: 40.0,
            kp_swing: 60.0,
            kd: 1.0,
            damping: 0.02,
            max_joint_velocity: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointCommand {
    pub q_des: Vector12,
    pub qd_des: Vector12,
    pub tau_ff: Vector12,
    pub kp: Vector12,
    pub kd: Vector12,
}

impl JointCommand {
    pub fn zeros() -> Self {
        Self {
            q_des: Vector12::zeros(),
            qd_des: Vector12::zeros(),
            tau_ff: Vector12::zeros(),
            kp: Vector12::zeros(),
            kd: Vector12::zeros(),
        }
    }
}

/// Body pose and twist in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub position: Vector3<f64>,
    /// Body-to-world rotation.
    pub rotation: Matrix3<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

fn clamp_abs(v: f64, limit: f64) -> f64 {
    v.clamp(-limit, limit)
}

/// Joint torques that press the foot on the ground with `f_des` (world frame,
/// force exerted by the ground on the foot).
pub fn stance_torques(
    model: &RobotModel,
    leg: LegId,
    f_des: &Vector3<f64>,
    q_leg: &Vector3<f64>,
    body_rotation: &Matrix3<f64>,
    torque_limit: f64,
) -> Vector3<f64> {
    let j = model.foot_jacobian(leg, q_leg);
    let tau = j.transpose() * (body_rotation.transpose() * -f_des);
    tau.map(|t| clamp_abs(t, torque_limit))
}

/// Joint targets that place the foot at a world-frame position and velocity.
pub fn swing_command(
    model: &RobotModel,
    params: &WbicParams,
    leg: LegId,
    p_foot_des: &Vector3<f64>,
    pd_foot_des: &Vector3<f64>,
    body: &BodyPose,
) -> Result<(Vector3<f64>, Vector3<f64>), ModelError> {
    let rt = body.rotation.transpose();
    let rel = p_foot_des - body.position;
    let p_hip = rt * rel - model.hip_offset(leg);
    let q = model.inverse_kinematics(leg, &p_hip)?;
    let v_rel = rt * (pd_foot_des - body.linear_velocity - body.angular_velocity.cross(&rel));
    let j = model.foot_jacobian(leg, &q);
    let qd = if j.determinant().abs() > 1e-3 {
        j.try_inverse().map(|ji| ji * v_rel)
    } else {
        None
    };
    let qd = qd.unwrap_or_else(|| {
        let lambda2 = params.damping * params.damping;
        let jt = j.transpose();
        (jt * j + Matrix3::identity() * lambda2)
            .try_inverse()
            .map(|m| m * jt * v_rel)
            .unwrap_or_else(Vector3::zeros)
    });
    Ok((q, qd.map(|v| clamp_abs(v, params.max_joint_velocity))))
}

pub fn joint_pd(cmd: &JointCommand, q: &Vector12, qd: &Vector12, torque_limit: f64) -> Vector12 {
    let tau = cmd.kp.component_mul(&(cmd.q_des - q)) + cmd.kd.component_mul(&(cmd.qd_des - qd)) + cmd.tau_ff;
    tau.map(|t| clamp_abs(t, torque_limit))
}

/// Builds the full joint command for one control tick. Stance legs hold their
/// measured angles and add the force torques; swing legs track the desired
/// foot motion. A swing target outside the workspace holds the current angles.
#[allow(clippy::too_many_arguments)]
pub fn whole_body_command(
    model: &RobotModel,
    params: &WbicParams,
    contact: ContactState,
    forces: &[Vector3<f64>; 4],
    foot_des: &[Vector3<f64>; 4],
    foot_vel_des: &[Vector3<f64>; 4],
    body: &BodyPose,
    q: &Vector12,
) -> JointCommand {
    let mut cmd = JointCommand::zeros();
    for leg in LegId::ALL {
        let i = leg.index();
        let q_leg: Vector3<f64> = q.fixed_rows::<3>(3 * i).into();
        let (q_des, qd_des, tau, kp) = if contact.in_contact(leg) {
            let tau = stance_torques(model, leg, &forces[i], &q_leg, &body.rotation, params.torque_limit);
            (q_leg, Vector3::zeros(), tau, params.kp_stance)
        } else {
            let (qd, qdd) = swing_command(model, params, leg, &foot_des[i], &foot_vel_des[i], body)
                .unwrap_or((q_leg, Vector3::zeros()));
            (qd, qdd, Vector3::zeros(), params.kp_swing)
        };
        cmd.q_des.fixed_rows_mut::<3>(3 * i).copy_from(&q_des);
        cmd.qd_des.fixed_rows_mut::<3>(3 * i).copy_from(&qd_des);
        cmd.tau_ff.fixed_rows_mut::<3>(3 * i).copy_from(&tau);
        cmd.kp.fixed_rows_mut::<3>(3 * i).fill(kp);
        cmd.kd.fixed_rows_mut::<3>(3 * i).fill(params.kd);
    }
    cmd
}
