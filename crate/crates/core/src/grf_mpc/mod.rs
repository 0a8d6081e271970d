//! Ground reaction force planning by convex model-predictive control.

mod qp;
mod solver;

use std::io::Write;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LegId, RobotModel};
use crate::wtg::{DesiredTrajectory, WholeBodyState};

pub use qp::{build_qp, ForceSlot, MpcWeights, QpProblem, NX, ROWS_PER_FOOT};
pub use solver::{
    natural_residual, project_friction_pyramid, solve_qp, IterationLog, QpSolution, SolveStats, SolverParams,
};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("force constraint set is empty")]
    Infeasible,
    #[error("solver stopped after {} iterations with KKT residual {:.3e}", .plan.stats.iterations, .plan.stats.kkt_residual)]
    NotConverged { plan: Box<GrfPlan> },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Per-step, per-foot world-frame forces over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfPlan {
    pub first_step: i64,
    pub forces: Vec<[Vector3<f64>; 4]>,
    pub stats: SolveStats,
}

impl GrfPlan {
    pub fn from_solution(problem: &QpProblem, x: &DVector<f64>, first_step: i64, stats: SolveStats) -> Self {
        let mut forces = vec![[Vector3::zeros(); 4]; problem.horizon];
        for (s, slot) in problem.slots.iter().enumerate() {
            forces[slot.step][slot.leg.index()] = Vector3::new(x[3 * s], x[3 * s + 1], x[3 * s + 2]);
        }
        Self { first_step, forces, stats }
    }

    /// Forces to apply now; zero when the horizon is empty.
    pub fn current(&self) -> [Vector3<f64>; 4] {
        self.forces.first().copied().unwrap_or([Vector3::zeros(); 4])
    }

    fn at(&self, step: i64, leg: LegId) -> Option<Vector3<f64>> {
        let k = usize::try_from(step - self.first_step).ok()?;
        self.forces.get(k).map(|f| f[leg.index()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcParams {
    pub weights: MpcWeights,
    pub solver: SolverParams,
}

/// One MPC instance per control loop. Keeps the previous plan to warm-start
/// the next solve.
#[derive(Debug, Clone)]
pub struct GrfMpc {
    model: RobotModel,
    params: MpcParams,
    dt: f64,
    previous: Option<GrfPlan>,
}

impl GrfMpc {
    pub fn new(model: RobotModel, params: MpcParams, dt: f64) -> Self {
        Self { model, params, dt, previous: None }
    }

    pub fn params(&self) -> &MpcParams {
        &self.params
    }

    pub fn build(&self, traj: &DesiredTrajectory, x0: &WholeBodyState) -> QpProblem {
        let reference: Vec<WholeBodyState> = traj.states().cloned().collect();
        build_qp(&reference, x0, &self.model, &self.params.weights, self.dt)
    }

    fn warm_start(&self, problem: &QpProblem, first_step: i64) -> Option<DVector<f64>> {
        let prev = self.previous.as_ref()?;
        let mut x = DVector::zeros(problem.dim());
        for (s, slot) in problem.slots.iter().enumerate() {
            let f = prev.at(first_step + slot.step as i64, slot.leg).filter(|f| f.z > 0.0).unwrap_or_else(|| {
                let n = problem.slots.iter().filter(|o| o.step == slot.step).count();
                Vector3::new(0.0, 0.0, self.model.mass * crate::model::GRAVITY / n as f64)
            });
            x.fixed_rows_mut::<3>(3 * s).copy_from(&f);
        }
        Some(x)
    }

    /// Plans forces for the window held in `traj` from the measured state.
    /// A plan that misses the tolerance is still exactly feasible and is
    /// returned inside `NotConverged`.
    pub fn solve(&mut self, traj: &DesiredTrajectory, x0: &WholeBodyState) -> Result<GrfPlan, MpcError> {
        let problem = self.build(traj, x0);
        let first_step = traj.first_step();
        let warm = self.warm_start(&problem, first_step);
        let sol = solve_qp(&problem, warm.as_ref(), &self.params.solver);
        let plan = GrfPlan::from_solution(&problem, &sol.x, first_step, sol.stats);
        self.previous = Some(plan.clone());
        if sol.converged {
            Ok(plan)
        } else {
            Err(MpcError::NotConverged { plan: Box::new(plan) })
        }
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }
}

/// Writes `iteration,residual,objective` rows for one solve.
pub fn write_diagnostics<W: Write>(stats: &SolveStats, out: W) -> Result<(), MpcError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "residual", "objective"])?;
    for h in &stats.history {
        w.serialize((h.iteration, h.residual, h.objective))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{ContactState, GaitMode};
    use crate::model::GRAVITY;
    use crate::wtg::{Action, WtgParams};

    fn stand_problem(h: usize, contact: ContactState) -> (RobotModel, QpProblem) {
        let model = RobotModel::default();
        let mut s = WholeBodyState::standing(&model, 0.0, 0.0);
        s.contact = contact;
        let reference = vec![s.clone(); h + 1];
        let qp = build_qp(&reference, &s, &model, &MpcWeights::default(), 0.036);
        (model, qp)
    }

    #[test]
    fn standing_forces_share_weight_equally() {
        let (model, qp) = stand_problem(10, ContactState::ALL_STANCE);
        let sol = solve_qp(&qp, None, &SolverParams::default());
        assert!(sol.converged);
        assert!(sol.stats.kkt_residual <= 1e-6);
        let plan = GrfPlan::from_solution(&qp, &sol.x, 0, sol.stats);
        let fz = model.mass * GRAVITY / 4.0;
        for step in &plan.forces {
            for f in step {
                assert!((f - Vector3::new(0.0, 0.0, fz)).amax() < 1e-4, "{f:?}");
            }
        }
    }

    #[test]
    fn diagonal_pair_carries_half_weight() {
        let (model, qp) = stand_problem(3, ContactState([true, false, false, true]));
        let sol = solve_qp(&qp, None, &SolverParams::default());
        assert!(sol.converged);
        let plan = GrfPlan::from_solution(&qp, &sol.x, 0, sol.stats);
        for step in &plan.forces {
            assert!((step[0].z - model.mass * GRAVITY / 2.0).abs() < 1e-4);
            assert!((step[3].z - model.mass * GRAVITY / 2.0).abs() < 1e-4);
            assert_eq!(step[1], Vector3::zeros());
            assert_eq!(step[2], Vector3::zeros());
        }
    }

    #[test]
    fn flight_problem_is_empty() {
        let (_, qp) = stand_problem(10, ContactState::FLIGHT);
        let sol = solve_qp(&qp, None, &SolverParams::default());
        assert!(sol.converged);
        let plan = GrfPlan::from_solution(&qp, &sol.x, 0, sol.stats);
        assert!(plan.forces.iter().flatten().all(|f| *f == Vector3::zeros()));
    }

    fn moving_trot(x_offset: f64) -> (RobotModel, DesiredTrajectory, WholeBodyState) {
        let model = RobotModel::default();
        let mode = GaitMode::trot(10);
        let init = WholeBodyState::standing(&model, x_offset, 0.0);
        let mut traj = DesiredTrajectory::new(&model, mode, WtgParams::default(), init).unwrap();
        for _ in 0..14 {
            traj.extend(&Action::forward(1.0, &mode), None).unwrap();
            traj.advance();
        }
        traj.extend(&Action::forward(1.0, &mode), None).unwrap();
        let mut x0 = traj.front().clone();
        x0.p_b[0] -= 0.03;
        x0.p_b[2] -= 0.01;
        x0.p_b[4] = 0.05;
        x0.pd_b[0] = 0.6;
        (model, traj, x0)
    }

    #[test]
    fn constrained_solve_converges_and_is_feasible() {
        let (model, traj, x0) = moving_trot(0.0);
        let mut mpc = GrfMpc::new(model.clone(), MpcParams::default(), 0.036);
        let plan = mpc.solve(&traj, &x0).unwrap();
        assert!(plan.stats.kkt_residual <= 1e-6);
        for (k, step) in plan.forces.iter().enumerate() {
            let c = traj.get(k).unwrap().contact;
            for leg in LegId::ALL {
                let f = step[leg.index()];
                if !c.in_contact(leg) {
                    assert_eq!(f, Vector3::zeros());
                } else {
                    assert!(f.z >= 0.0 && f.z <= model.max_normal_force);
                    assert!(f.x.abs() <= model.friction_coefficient * f.z);
                    assert!(f.y.abs() <= model.friction_coefficient * f.z);
                }
            }
        }
        // A warm-started repeat lands on the same optimum.
        let again = mpc.solve(&traj, &x0).unwrap();
        for (a, b) in plan.forces.iter().flatten().zip(again.forces.iter().flatten()) {
            assert!((a - b).amax() < 1e-6);
        }
    }

    #[test]
    fn translation_leaves_forces_unchanged() {
        let (model, traj_a, x0_a) = moving_trot(0.0);
        let (_, traj_b, x0_b) = moving_trot(3.7);
        let mut a = GrfMpc::new(model.clone(), MpcParams::default(), 0.036);
        let mut b = GrfMpc::new(model, MpcParams::default(), 0.036);
        let pa = a.solve(&traj_a, &x0_a).unwrap();
        let pb = b.solve(&traj_b, &x0_b).unwrap();
        for (fa, fb) in pa.forces.iter().flatten().zip(pb.forces.iter().flatten()) {
            assert!((fa - fb).amax() < 1e-9, "{fa:?} vs {fb:?}");
        }
    }

    #[test]
    fn logged_objective_never_increases() {
        let (model, traj, x0) = moving_trot(0.0);
        let params = MpcParams {
            solver: SolverParams { record_history: true, polish_every: 1000, max_iter: 300, ..SolverParams::default() },
            ..MpcParams::default()
        };
        let qp = GrfMpc::new(model, params, 0.036).build(&traj, &x0);
        let sol = solve_qp(&qp, None, &params.solver);
        assert!(sol.stats.history.len() > 10);
        for w in sol.stats.history.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
        let mut buf = Vec::new();
        write_diagnostics(&sol.stats, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), sol.stats.history.len() + 1);
    }

    #[test]
    fn iteration_cap_reports_feasible_plan() {
        let (model, traj, x0) = moving_trot(0.0);
        let params = MpcParams {
            solver: SolverParams { max_iter: 1, polish_every: 1000, ..SolverParams::default() },
            ..MpcParams::default()
        };
        let mut mpc = GrfMpc::new(model.clone(), params, 0.036);
        match mpc.solve(&traj, &x0) {
            Err(MpcError::NotConverged { plan }) => {
                assert_eq!(plan.stats.iterations, 1);
                for f in plan.forces.iter().flatten() {
                    assert!(f.z >= 0.0 && f.x.abs() <= model.friction_coefficient * f.z);
                }
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
