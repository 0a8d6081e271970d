//! Force-level reduced-order simulation: the body is a single rigid body
//! driven by the commanded ground forces, legs are massless, stance feet are
//! pinned and swing feet follow their commanded paths.

mod rollout;

use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::gait::ContactState;
use crate::grf_mpc::project_friction_pyramid;
use crate::model::{LegId, RobotModel, GRAVITY};
use crate::terrain::{GapWorld, TerrainSample};
use crate::wtg::WholeBodyState;

pub use rollout::{
    observe, rollout, EpisodeResult, GapOutcome, LogRow, RolloutConfig, SimError, Touchdown,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    Fell,
    Tipped,
    SteppedInGap,
    TimedOut,
    ReachedEnd,
}

impl EpisodeStatus {
    pub fn is_terminal(self) -> bool {
        self != EpisodeStatus::Running
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    /// Weights on forward progress, excess speed, |roll|, |pitch|, |yaw|, joint speed.
    pub c: [f64; 6],
    pub v_thresh: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { c: [1.0, 0.5, 0.02, 0.05, 0.15, 0.03], v_thresh: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Integration step, s.
    pub dt: f64,
    /// Simulation steps between joint-command updates.
    pub wbic_every: usize,
    pub max_steps: usize,
    pub min_height: f64,
    pub max_tilt: f64,
    pub reward: RewardParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.001,
            wbic_every: 2,
            max_steps: 500,
            min_height: 0.2,
            max_tilt: 0.7,
            reward: RewardParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEventKind {
    Touchdown,
    Liftoff,
    /// Stance foot beyond the leg's reach; its force was dropped.
    LegOverextended,
    /// Commanded force outside the friction pyramid; it was projected.
    FrictionClamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub leg: LegId,
    pub kind: SimEventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Measured body and feet; `pd_b[3..6]` holds Euler rates.
    pub body: WholeBodyState,
    /// World-frame angular velocity.
    pub omega: Vector3<f64>,
    pub time: f64,
    pub step: usize,
    pub anchors: [Option<Vector3<f64>>; 4],
    pub status: EpisodeStatus,
    pub events: Vec<SimEvent>,
}

fn rot_z(yaw: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix()
}

pub fn body_rotation(euler: &Vector3<f64>) -> Matrix3<f64> {
    *Rotation3::from_euler_angles(euler.x, euler.y, euler.z).matrix()
}

impl SimState {
    /// Standing at rest with every foot pinned under its hip.
    pub fn standing(model: &RobotModel, x: f64, y: f64) -> Self {
        let body = WholeBodyState::standing(model, x, y);
        let anchors = body.p_f.map(Some);
        Self {
            body,
            omega: Vector3::zeros(),
            time: 0.0,
            step: 0,
            anchors,
            status: EpisodeStatus::Running,
            events: Vec::new(),
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.body.position()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.body.linear_velocity()
    }

    pub fn euler(&self) -> Vector3<f64> {
        self.body.euler()
    }

    /// Applies contact changes, then integrates one step with semi-implicit
    /// Euler. Stance feet stay on their anchors and swing feet jump to
    /// `swing_targets`. A touchdown inside a gap marks the episode.
    pub fn step(
        &self,
        model: &RobotModel,
        world: &GapWorld,
        contact: ContactState,
        grf: &[Vector3<f64>; 4],
        swing_targets: &[Vector3<f64>; 4],
        dt: f64,
    ) -> SimState {
        let mut next = self.clone();
        next.events.clear();
        let p = self.position();
        let euler = self.euler();
        let rot = body_rotation(&euler);

        for leg in LegId::ALL {
            let i = leg.index();
            let stance = contact.in_contact(leg);
            match (stance, self.anchors[i]) {
                (true, None) => {
                    let foot = self.body.p_f[i];
                    let anchor = Vector3::new(foot.x, foot.y, 0.0);
                    next.anchors[i] = Some(anchor);
                    next.events.push(SimEvent { time: self.time, leg, kind: SimEventKind::Touchdown });
                    if matches!(world.height_at(foot.x, foot.y), TerrainSample::Gap) {
                        next.status = EpisodeStatus::SteppedInGap;
                    }
                }
                (false, Some(_)) => {
                    next.anchors[i] = None;
                    next.events.push(SimEvent { time: self.time, leg, kind: SimEventKind::Liftoff });
                }
                _ => {}
            }
        }
        next.body.contact = contact;

        let mut force = Vector3::zeros();
        let mut torque = Vector3::zeros();
        for leg in LegId::ALL {
            let i = leg.index();
            let Some(anchor) = next.anchors[i] else { continue };
            let hip = p + rot * model.hip_offset(leg);
            let reach = (model.leg_reach().powi(2) + model.link_lengths.abduction.powi(2)).sqrt();
            if (anchor - hip).norm() > reach {
                next.events.push(SimEvent { time: self.time, leg, kind: SimEventKind::LegOverextended });
                continue;
            }
            let f = project_friction_pyramid(&grf[i], model.friction_coefficient, model.max_normal_force);
            if f != grf[i] {
                next.events.push(SimEvent { time: self.time, leg, kind: SimEventKind::FrictionClamped });
            }
            force += f;
            torque += (anchor - p).cross(&f);
        }

        let acc = force / model.mass - Vector3::new(0.0, 0.0, GRAVITY);
        let rz = rot_z(euler.z);
        let iw = rz * model.inertia() * rz.transpose();
        let omega_dot = iw.try_inverse().expect("inertia is positive definite") * torque;

        let v = self.velocity() + acc * dt;
        let pos = p + v * dt;
        let omega = self.omega + omega_dot * dt;
        let euler_rate = rz.transpose() * omega;
        let euler_next = euler + euler_rate * dt;

        next.omega = omega;
        next.body.p_b = Vector6::new(pos.x, pos.y, pos.z, euler_next.x, euler_next.y, euler_next.z);
        next.body.pd_b = Vector6::new(v.x, v.y, v.z, euler_rate.x, euler_rate.y, euler_rate.z);
        let alpha = iw.try_inverse().unwrap_or_else(Matrix3::zeros) * torque;
        next.body.pdd_b = Vector6::new(acc.x, acc.y, acc.z, alpha.x, alpha.y, alpha.z);
        for leg in LegId::ALL {
            let i = leg.index();
            let (pf, vf) = match next.anchors[i] {
                Some(a) => (a, Vector3::zeros()),
                None => (swing_targets[i], (swing_targets[i] - self.body.p_f[i]) / dt),
            };
            next.body.p_f[i] = pf;
            next.body.pd_f[i] = vf;
        }
        next.time = self.time + dt;
        next
    }
}

/// First matching rule of: too low, tipped, foot in a gap, out of time,
/// past the finish line.
pub fn check_termination(state: &SimState, params: &SimParams, finish_x: f64) -> EpisodeStatus {
    let p = state.position();
    let e = state.euler();
    if p.z < params.min_height {
        EpisodeStatus::Fell
    } else if e.x.abs() > params.max_tilt || e.y.abs() > params.max_tilt {
        EpisodeStatus::Tipped
    } else if state.status == EpisodeStatus::SteppedInGap {
        EpisodeStatus::SteppedInGap
    } else if state.step >= params.max_steps {
        EpisodeStatus::TimedOut
    } else if p.x >= finish_x {
        EpisodeStatus::ReachedEnd
    } else {
        EpisodeStatus::Running
    }
}

/// Progress reward with penalties on excess speed, attitude and joint speed
/// (L1 norm of `qd`).
pub fn reward(prev: &SimState, cur: &SimState, qd: &[f64], params: &RewardParams) -> f64 {
    let c = &params.c;
    let dx = cur.position().x - prev.position().x;
    let speed = cur.velocity().norm();
    let e = cur.euler();
    let joint = qd.iter().map(|v| v.abs()).sum::<f64>();
    c[0] * dx - c[1] * (speed - params.v_thresh).max(0.0) - c[2] * e.x.abs() - c[3] * e.y.abs() - c[4] * e.z.abs()
        - c[5] * joint
}
