//! Condensed QP over stance-foot forces for the linearized single rigid body.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::model::{LegId, RobotModel, GRAVITY};
use crate::wtg::WholeBodyState;

pub const NX: usize = 13;
/// Inequality rows per stance foot: four pyramid faces and the normal-force box.
pub const ROWS_PER_FOOT: usize = 5;

type MatX = SMatrix<f64, NX, NX>;
type MatB = SMatrix<f64, NX, 3>;
type VecX = SVector<f64, NX>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcWeights {
    pub orientation: [f64; 3],
    pub position: [f64; 3],
    pub angular_velocity: [f64; 3],
    pub linear_velocity: [f64; 3],
    /// Penalty on deviation from an equal share of body weight per stance foot.
    pub force_regularization: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            orientation: [1.0; 3],
            position: [30.0, 30.0, 50.0],
            angular_velocity: [0.1; 3],
            linear_velocity: [1.0; 3],
            force_regularization: 1e-6,
        }
    }
}

impl MpcWeights {
    pub fn scaled(&self, s: f64) -> Self {
        let m = |a: [f64; 3]| a.map(|v| v * s);
        Self {
            orientation: m(self.orientation),
            position: m(self.position),
            angular_velocity: m(self.angular_velocity),
            linear_velocity: m(self.linear_velocity),
            force_regularization: self.force_regularization * s,
        }
    }

    fn diagonal(&self) -> VecX {
        let mut l = VecX::zeros();
        for i in 0..3 {
            l[i] = self.orientation[i];
            l[3 + i] = self.position[i];
            l[6 + i] = self.angular_velocity[i];
            l[9 + i] = self.linear_velocity[i];
        }
        l
    }
}

/// One stance foot at one horizon step; owns three consecutive decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForceSlot {
    pub step: usize,
    pub leg: LegId,
}

/// `min 0.5 x'Px + q'x + constant` subject to every slot's force lying in the
/// friction pyramid with a bounded normal component.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub constant: f64,
    pub slots: Vec<ForceSlot>,
    pub horizon: usize,
    pub mu: f64,
    pub f_max: f64,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        ROWS_PER_FOOT * self.slots.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x) + self.constant
    }

    /// Constraints in `G x <= h` form, rows ordered per slot as
    /// `fx - mu fz`, `-fx - mu fz`, `fy - mu fz`, `-fy - mu fz`, `fz - f_max`
    /// followed by one `-fz <= 0` row per slot.
    pub fn constraint_matrix(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let ns = self.slots.len();
        let mut g = DMatrix::zeros(ROWS_PER_FOOT * ns + ns, n);
        let mut h = DVector::zeros(ROWS_PER_FOOT * ns + ns);
        for s in 0..ns {
            let (r, c) = (ROWS_PER_FOOT * s, 3 * s);
            for (k, (axis, sign)) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)].into_iter().enumerate() {
                g[(r + k, c + axis)] = sign;
                g[(r + k, c + 2)] = -self.mu;
            }
            g[(r + 4, c + 2)] = 1.0;
            h[r + 4] = self.f_max;
            g[(ROWS_PER_FOOT * ns + s, c + 2)] = -1.0;
        }
        (g, h)
    }

    /// Largest violation of the force constraints at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.slots.len())
            .map(|s| {
                let (fx, fy, fz) = (x[3 * s], x[3 * s + 1], x[3 * s + 2]);
                (fx.abs() - self.mu * fz).max(fy.abs() - self.mu * fz).max(-fz).max(fz - self.f_max)
            })
            .fold(0.0, f64::max)
    }
}

fn skew(r: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0)
}

fn rot_z(yaw: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix()
}

/// World angular velocity from Euler rates under the small roll/pitch model.
fn omega_world(s: &WholeBodyState) -> Vector3<f64> {
    rot_z(s.yaw()) * s.angular_velocity()
}

fn state_vector(s: &WholeBodyState) -> VecX {
    let mut x = VecX::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(&s.euler());
    x.fixed_rows_mut::<3>(3).copy_from(&s.position());
    x.fixed_rows_mut::<3>(6).copy_from(&omega_world(s));
    x.fixed_rows_mut::<3>(9).copy_from(&s.linear_velocity());
    x[12] = GRAVITY;
    x
}

/// `reference[0]` is the current step and `reference[1..=H]` the targets.
/// Stance feet at step 0 use the measured foot positions in `x0`.
pub fn build_qp(reference: &[WholeBodyState], x0: &WholeBodyState, model: &RobotModel, weights: &MpcWeights, dt: f64) -> QpProblem {
    let horizon = reference.len().saturating_sub(1);
    let l = weights.diagonal();
    let inertia = model.inertia();
    let inv_inertia = inertia.try_inverse().expect("body inertia is positive definite");

    let mut a = Vec::with_capacity(horizon);
    let mut b: Vec<Vec<(LegId, MatB)>> = Vec::with_capacity(horizon);
    let mut slots = Vec::new();
    for (k, s) in reference[..horizon].iter().enumerate() {
        let rz = rot_z(s.yaw());
        let mut ak = MatX::identity();
        ak.fixed_view_mut::<3, 3>(0, 6).copy_from(&(rz.transpose() * dt));
        ak.fixed_view_mut::<3, 3>(3, 9).copy_from(&(Matrix3::identity() * dt));
        ak[(11, 12)] = -dt;
        a.push(ak);

        // Lever arms are taken at mid-interval, where the body sits on
        // average while the force is held.
        let (body, feet) = if k == 0 {
            (x0.position() + x0.linear_velocity() * (dt / 2.0), &x0.p_f)
        } else {
            (s.position() + s.linear_velocity() * (dt / 2.0), &s.p_f)
        };
        let iw_inv = rz * inv_inertia * rz.transpose();
        let mut bk = Vec::new();
        for leg in LegId::ALL {
            if !s.contact.in_contact(leg) {
                continue;
            }
            let r = feet[leg.index()] - body;
            let mut blk = MatB::zeros();
            blk.fixed_view_mut::<3, 3>(6, 0).copy_from(&(iw_inv * skew(&r) * dt));
            blk.fixed_view_mut::<3, 3>(9, 0).copy_from(&(Matrix3::identity() * (dt / model.mass)));
            bk.push((leg, blk));
            slots.push(ForceSlot { step: k, leg });
        }
        b.push(bk);
    }

    let n = 3 * slots.len();
    let mut slot_start = Vec::with_capacity(horizon + 1);
    let mut acc = 0;
    for bk in &b {
        slot_start.push(acc);
        acc += bk.len();
    }

    // Free response and its tracking error.
    let mut err = vec![VecX::zeros(); horizon + 1];
    let mut x = state_vector(x0);
    let mut constant = 0.0;
    for k in 1..=horizon {
        x = a[k - 1] * x;
        err[k] = x - state_vector(&reference[k]);
        constant += err[k].component_mul(&l).dot(&err[k]);
    }

    // Cost-to-go matrices S and linear terms w, indexed by state step.
    let lm = MatX::from_diagonal(&l);
    let mut s_mat = vec![MatX::zeros(); horizon + 1];
    let mut w = vec![VecX::zeros(); horizon + 1];
    if horizon > 0 {
        s_mat[horizon] = lm;
        w[horizon] = err[horizon].component_mul(&l);
        for m in (1..horizon).rev() {
            s_mat[m] = lm + a[m].transpose() * s_mat[m + 1] * a[m];
            w[m] = err[m].component_mul(&l) + a[m].transpose() * w[m + 1];
        }
    }

    let mut p = DMatrix::zeros(n, n);
    let mut q = DVector::zeros(n);
    for j in 0..horizon {
        for (ja, (_, bja)) in b[j].iter().enumerate() {
            let col = 3 * (slot_start[j] + ja);
            q.fixed_rows_mut::<3>(col).copy_from(&(bja.transpose() * w[j + 1] * 2.0));
            let mut c = *bja;
            for i in j..horizon {
                let d = s_mat[i + 1] * c;
                for (ib, (_, bib)) in b[i].iter().enumerate() {
                    let row = 3 * (slot_start[i] + ib);
                    let blk = bib.transpose() * d * 2.0;
                    p.fixed_view_mut::<3, 3>(row, col).copy_from(&blk);
                    if row != col {
                        p.fixed_view_mut::<3, 3>(col, row).copy_from(&blk.transpose());
                    }
                }
                if i + 1 < horizon {
                    c = a[i + 1] * c;
                }
            }
        }
    }

    // Regularize toward an equal share of body weight on the stance feet.
    let alpha = weights.force_regularization;
    for (k, bk) in b.iter().enumerate() {
        if bk.is_empty() {
            continue;
        }
        let fz_ref = model.mass * GRAVITY / bk.len() as f64;
        for ja in 0..bk.len() {
            let i = 3 * (slot_start[k] + ja);
            for d in 0..3 {
                p[(i + d, i + d)] += 2.0 * alpha;
            }
            q[i + 2] -= 2.0 * alpha * fz_ref;
            constant += alpha * fz_ref * fz_ref;
        }
    }
    // Exact symmetry for the factorizations downstream.
    let p = (&p + p.transpose()) * 0.5;

    QpProblem {
        p,
        q,
        constant,
        slots,
        horizon,
        mu: model.friction_coefficient,
        f_max: model.max_normal_force,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{ContactState, GaitMode};
    use crate::wtg::{Action, DesiredTrajectory, WtgParams};

    fn standing_reference(h: usize, x_offset: f64) -> Vec<WholeBodyState> {
        let model = RobotModel::default();
        let s = WholeBodyState::standing(&model, x_offset, 0.0);
        vec![s; h + 1]
    }

    /// Cost evaluated by forward simulation, independent of the condensing.
    fn rollout_cost(reference: &[WholeBodyState], x0: &WholeBodyState, model: &RobotModel, w: &MpcWeights, dt: f64, qp: &QpProblem, u: &DVector<f64>) -> f64 {
        let mut pos = x0.position();
        let mut vel = x0.linear_velocity();
        let mut th = x0.euler();
        let mut om = omega_world(x0);
        let l = w.diagonal();
        let mut cost = 0.0;
        for k in 0..qp.horizon {
            let s = &reference[k];
            let rz = rot_z(s.yaw());
            let src = if k == 0 { x0 } else { s };
            let (body, feet) = (src.position() + src.linear_velocity() * (dt / 2.0), &src.p_f);
            let mut force = Vector3::zeros();
            let mut torque = Vector3::zeros();
            let mut n_stance = 0;
            for (si, slot) in qp.slots.iter().enumerate() {
                if slot.step != k {
                    continue;
                }
                let f = Vector3::new(u[3 * si], u[3 * si + 1], u[3 * si + 2]);
                force += f;
                torque += (feet[slot.leg.index()] - body).cross(&f);
                n_stance += 1;
                let fz_ref = model.mass * GRAVITY / s.contact.stance_count() as f64;
                cost += w.force_regularization * (f - Vector3::new(0.0, 0.0, fz_ref)).norm_squared();
            }
            assert_eq!(n_stance, s.contact.stance_count());
            let iw = rz * model.inertia() * rz.transpose();
            let th_next = th + rz.transpose() * om * dt;
            let pos_next = pos + vel * dt;
            let om_next = om + iw.try_inverse().unwrap() * torque * dt;
            let vel_next = vel + (force / model.mass - Vector3::new(0.0, 0.0, GRAVITY)) * dt;
            th = th_next;
            pos = pos_next;
            om = om_next;
            vel = vel_next;
            let d = &reference[k + 1];
            let mut e = VecX::zeros();
            e.fixed_rows_mut::<3>(0).copy_from(&(th - d.euler()));
            e.fixed_rows_mut::<3>(3).copy_from(&(pos - d.position()));
            e.fixed_rows_mut::<3>(6).copy_from(&(om - omega_world(d)));
            e.fixed_rows_mut::<3>(9).copy_from(&(vel - d.linear_velocity()));
            cost += e.component_mul(&l).dot(&e);
        }
        cost
    }

    #[test]
    fn dimensions_follow_contacts() {
        let model = RobotModel::default();
        let mut reference = standing_reference(10, 0.0);
        let qp = build_qp(&reference, &reference[0].clone(), &model, &MpcWeights::default(), 0.036);
        assert_eq!(qp.dim(), 120);
        assert_eq!(qp.num_constraints(), 200);
        for s in reference.iter_mut() {
            s.contact = ContactState::FLIGHT;
        }
        let qp = build_qp(&reference, &reference[0].clone(), &model, &MpcWeights::default(), 0.036);
        assert_eq!(qp.dim(), 0);
        assert_eq!(qp.num_constraints(), 0);
    }

    #[test]
    fn condensed_cost_matches_forward_simulation() {
        let model = RobotModel::default();
        let init = WholeBodyState::standing(&model, 0.2, 0.1);
        let mode = GaitMode::trot(10);
        let mut traj = DesiredTrajectory::new(&model, mode, WtgParams::default(), init).unwrap();
        for i in 0..7 {
            let mut a = Action::forward(0.7, &mode);
            a.yaw_rate = 0.3 * (i as f64 - 3.0);
            a.v_cmd.z = 0.1;
            traj.extend(&a, None).unwrap();
            traj.advance();
        }
        traj.extend(&Action::forward(0.7, &mode), None).unwrap();
        let reference: Vec<_> = traj.states().cloned().collect();
        let mut x0 = reference[0].clone();
        x0.p_b += nalgebra::Vector6::new(0.01, -0.02, 0.015, 0.03, -0.02, 0.05);
        x0.pd_b += nalgebra::Vector6::new(0.1, 0.05, -0.1, 0.2, 0.1, -0.3);
        x0.p_f[0].x += 0.01;
        let w = MpcWeights { force_regularization: 1e-3, ..MpcWeights::default() };
        let qp = build_qp(&reference, &x0, &model, &w, 0.036);
        assert!(qp.dim() > 0);
        let mut rng_state = 12345u64;
        for _ in 0..5 {
            let u = DVector::from_fn(qp.dim(), |_, _| {
                rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((rng_state >> 11) as f64 / (1u64 << 53) as f64) * 60.0 - 10.0
            });
            let direct = rollout_cost(&reference, &x0, &model, &w, 0.036, &qp, &u);
            let condensed = qp.objective(&u);
            assert!((direct - condensed).abs() < 1e-8 * direct.abs().max(1.0), "{direct} vs {condensed}");
        }
    }

    #[test]
    fn doubling_weights_doubles_objective() {
        let model = RobotModel::default();
        let mut reference = standing_reference(5, 0.0);
        reference[3].p_b.z += 0.02;
        let w = MpcWeights::default();
        let a = build_qp(&reference, &reference[0].clone(), &model, &w, 0.036);
        let b = build_qp(&reference, &reference[0].clone(), &model, &w.scaled(2.0), 0.036);
        let u = DVector::from_fn(a.dim(), |i, _| 10.0 + (i % 7) as f64);
        assert!((b.objective(&u) - 2.0 * a.objective(&u)).abs() < 1e-9 * a.objective(&u).abs());
    }

    #[test]
    fn hessian_is_symmetric_positive_definite() {
        let model = RobotModel::default();
        let reference = standing_reference(10, 0.0);
        let qp = build_qp(&reference, &reference[0].clone(), &model, &MpcWeights::default(), 0.036);
        assert_eq!(qp.p, qp.p.transpose());
        assert!(qp.p.clone().cholesky().is_some());
    }

    #[test]
    fn constraint_matrix_agrees_with_violation() {
        let model = RobotModel::default();
        let reference = standing_reference(2, 0.0);
        let qp = build_qp(&reference, &reference[0].clone(), &model, &MpcWeights::default(), 0.036);
        let (g, h) = qp.constraint_matrix();
        let x = DVector::from_fn(qp.dim(), |i, _| if i % 3 == 2 { 20.0 } else { 9.0 - i as f64 });
        let v = (&g * &x - &h).max();
        assert!((v.max(0.0) - qp.max_violation(&x)).abs() < 1e-12);
    }
}
