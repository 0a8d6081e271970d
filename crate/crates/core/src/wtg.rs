//! Whole-body trajectory generator.
//!
//! Each high-level step appends one whole-body target to the end of the
//! planning window. Body motion follows the commanded velocity; foot targets
//! come from the Raibert heuristic and swing feet follow quadratic Bezier arcs.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{Rotation2, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::{contact_at, ContactState, GaitError, GaitMode};
use crate::model::{LegId, RobotModel};

#[derive(Debug, Error)]
pub enum WtgError {
    #[error("action {axis} = {value} outside [-{limit}, {limit}]")]
    ActionOutOfBounds { axis: &'static str, value: f64, limit: f64 },
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WholeBodyState {
    /// x, y, z, roll, pitch, yaw.
    pub p_b: Vector6<f64>,
    pub pd_b: Vector6<f64>,
    pub pdd_b: Vector6<f64>,
    pub p_f: [Vector3<f64>; 4],
    pub pd_f: [Vector3<f64>; 4],
    pub pdd_f: [Vector3<f64>; 4],
    pub contact: ContactState,
}

pub const STATE_COLUMNS: usize = 54;

impl WholeBodyState {
    /// At rest on flat ground with every foot under its hip.
    pub fn standing(model: &RobotModel, x: f64, y: f64) -> Self {
        let p_b = Vector6::new(x, y, model.standing_height, 0.0, 0.0, 0.0);
        let p_f = LegId::ALL.map(|leg| {
            let mut p = model.nominal_foot(leg) + Vector3::new(x, y, 0.0);
            p.z = 0.0;
            p
        });
        Self {
            p_b,
            pd_b: Vector6::zeros(),
            pdd_b: Vector6::zeros(),
            p_f,
            pd_f: [Vector3::zeros(); 4],
            pdd_f: [Vector3::zeros(); 4],
            contact: ContactState::ALL_STANCE,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.p_b.fixed_rows::<3>(0).into()
    }

    pub fn euler(&self) -> Vector3<f64> {
        self.p_b.fixed_rows::<3>(3).into()
    }

    pub fn linear_velocity(&self) -> Vector3<f64> {
        self.pd_b.fixed_rows::<3>(0).into()
    }

    pub fn angular_velocity(&self) -> Vector3<f64> {
        self.pd_b.fixed_rows::<3>(3).into()
    }

    pub fn yaw(&self) -> f64 {
        self.p_b[5]
    }

    /// 54 state values followed by 4 contact flags.
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(STATE_COLUMNS + 4);
        row.extend(self.p_b.iter().chain(self.pd_b.iter()).chain(self.pdd_b.iter()));
        for block in [&self.p_f, &self.pd_f, &self.pdd_f] {
            for v in block {
                row.extend(v.iter());
            }
        }
        row.extend(self.contact.as_f64());
        row
    }

    pub fn csv_header() -> Vec<String> {
        let mut h = Vec::with_capacity(STATE_COLUMNS + 4);
        for prefix in ["", "d", "dd"] {
            for n in ["x", "y", "z", "roll", "pitch", "yaw"] {
                h.push(format!("{prefix}{n}"));
            }
        }
        for prefix in ["", "d", "dd"] {
            for leg in LegId::ALL {
                for a in ["x", "y", "z"] {
                    h.push(format!("{prefix}foot_{leg:?}_{a}").to_lowercase());
                }
            }
        }
        for leg in LegId::ALL {
            h.push(format!("contact_{leg:?}").to_lowercase());
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionLimits {
    pub max_vx: f64,
    pub max_vy: f64,
    pub max_vz: f64,
}

impl Default for ActionLimits {
    fn default() -> Self {
        Self { max_vx: 2.5, max_vy: 1.0, max_vz: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Body-frame forward, lateral, vertical velocity (m/s).
    pub v_cmd: Vector3<f64>,
    pub yaw_rate: f64,
    #[serde(default)]
    pub contact_bits: Vec<bool>,
}

impl Action {
    /// Zero velocity with every foot commanded to stance.
    pub fn stand(mode: &GaitMode) -> Self {
        Self::forward(0.0, mode)
    }

    pub fn forward(vx: f64, mode: &GaitMode) -> Self {
        Self {
            v_cmd: Vector3::new(vx, 0.0, 0.0),
            yaw_rate: 0.0,
            contact_bits: mode.standing_bits(),
        }
    }

    pub fn validate(&self, limits: &ActionLimits) -> Result<(), WtgError> {
        let checks = [
            ("vx", self.v_cmd.x, limits.max_vx),
            ("vy", self.v_cmd.y, limits.max_vy),
            ("vz", self.v_cmd.z, limits.max_vz),
        ];
        for (axis, value, limit) in checks {
            if !(value.abs() <= limit) {
                return Err(WtgError::ActionOutOfBounds { axis, value, limit });
            }
        }
        if !self.yaw_rate.is_finite() {
            return Err(WtgError::ActionOutOfBounds { axis: "yaw_rate", value: self.yaw_rate, limit: f64::INFINITY });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WtgParams {
    /// High-level step, s.
    pub dt: f64,
    /// Planning window length in steps.
    pub horizon: usize,
    pub swing_clearance: f64,
    /// Raibert velocity-feedback gain, s.
    pub raibert_gain: f64,
    pub limits: ActionLimits,
}

impl Default for WtgParams {
    fn default() -> Self {
        Self {
            dt: 0.036,
            horizon: 10,
            swing_clearance: 0.08,
            raibert_gain: 0.03,
            limits: ActionLimits::default(),
        }
    }
}

pub fn raibert_foothold(v: Vector2<f64>, v_cmd: Vector2<f64>, dt_stance: f64, k_gain: f64) -> Vector2<f64> {
    v * (dt_stance / 2.0) + (v - v_cmd) * k_gain
}

/// Quadratic Bezier from `p_start` to `p_end` whose middle control point sits
/// `2 * clearance` above the chord midpoint. Derivatives are with respect to
/// time for a swing lasting `duration` seconds.
pub fn swing_trajectory(
    p_start: &Vector3<f64>,
    p_end: &Vector3<f64>,
    phase: f64,
    clearance: f64,
    duration: f64,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let s = phase.clamp(0.0, 1.0);
    let mid = (p_start + p_end) / 2.0 + Vector3::new(0.0, 0.0, 2.0 * clearance);
    let p = p_start * ((1.0 - s) * (1.0 - s)) + mid * (2.0 * s * (1.0 - s)) + p_end * (s * s);
    let dp = ((mid - p_start) * (1.0 - s) + (p_end - mid) * s) * 2.0;
    let ddp = (p_end - mid * 2.0 + p_start) * 2.0;
    (p, dp / duration, ddp / (duration * duration))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingPlan {
    pub start: Vector3<f64>,
    pub target: Vector3<f64>,
    pub liftoff_step: i64,
    pub touchdown_step: i64,
}

impl SwingPlan {
    fn duration_steps(&self) -> i64 {
        (self.touchdown_step - self.liftoff_step).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedFoothold {
    pub leg: LegId,
    pub liftoff_step: i64,
    pub touchdown_step: i64,
    pub nominal: Vector2<f64>,
    pub target: Vector3<f64>,
}

/// Hook that may move a nominal foothold (world xy) before it is committed.
pub type FootholdHook<'a> = &'a mut dyn FnMut(LegId, Vector2<f64>) -> Vector2<f64>;

/// Append-only window of whole-body targets. The front entry is the current
/// step; entries are never rewritten once appended.
#[derive(Debug, Clone)]
pub struct DesiredTrajectory {
    params: WtgParams,
    mode: GaitMode,
    /// Body-frame horizontal offsets of the nominal footholds.
    foot_offsets: [Vector2<f64>; 4],
    states: VecDeque<WholeBodyState>,
    first_step: i64,
    swings: [Option<SwingPlan>; 4],
    last_action: Action,
    footholds: Vec<PlannedFoothold>,
}

impl DesiredTrajectory {
    /// Window covering steps `0 .. horizon` grown from `initial` with
    /// zero-velocity actions.
    pub fn new(model: &RobotModel, mode: GaitMode, params: WtgParams, initial: WholeBodyState) -> Result<Self, WtgError> {
        let foot_offsets = LegId::ALL.map(|leg| model.nominal_foot(leg).xy());
        let mut traj = Self {
            params,
            mode,
            foot_offsets,
            states: VecDeque::from([initial]),
            first_step: -1,
            swings: [None; 4],
            last_action: Action::stand(&mode),
            footholds: Vec::new(),
        };
        let stand = Action::stand(&mode);
        for _ in 0..params.horizon {
            traj.extend(&stand, None)?;
        }
        traj.advance();
        Ok(traj)
    }

    pub fn params(&self) -> &WtgParams {
        &self.params
    }

    pub fn mode(&self) -> &GaitMode {
        &self.mode
    }

    pub fn first_step(&self) -> i64 {
        self.first_step
    }

    pub fn last_step(&self) -> i64 {
        self.first_step + self.states.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&WholeBodyState> {
        self.states.get(i)
    }

    pub fn states(&self) -> impl Iterator<Item = &WholeBodyState> {
        self.states.iter()
    }

    pub fn front(&self) -> &WholeBodyState {
        &self.states[0]
    }

    pub fn back(&self) -> &WholeBodyState {
        self.states.back().expect("trajectory is never empty")
    }

    pub fn last_action(&self) -> &Action {
        &self.last_action
    }

    pub fn swing_plan(&self, leg: LegId) -> Option<&SwingPlan> {
        self.swings[leg.index()].as_ref()
    }

    /// Footholds committed since the last call.
    pub fn take_footholds(&mut self) -> Vec<PlannedFoothold> {
        std::mem::take(&mut self.footholds)
    }

    pub fn footholds(&self) -> &[PlannedFoothold] {
        &self.footholds
    }

    /// Drops the current step once it has been executed.
    pub fn advance(&mut self) {
        if self.states.len() > 1 {
            self.states.pop_front();
            self.first_step += 1;
        }
    }

    fn contact(&self, step: i64, action: &Action) -> Result<ContactState, GaitError> {
        contact_at(&self.mode, step.max(0) as usize, Some(&action.contact_bits))
    }

    /// Run of consecutive steps from `step` with the same contact flag for
    /// `leg`, predicted from the schedule.
    fn predicted_run(&self, leg: LegId, step: i64, in_stance: bool, action: &Action) -> i64 {
        if !self.mode.kind.is_fixed() {
            return self.mode.half_cycle() as i64;
        }
        let mut n = 0;
        while n < self.mode.cycle_steps as i64 {
            match self.contact(step + n, action) {
                Ok(c) if c.in_contact(leg) == in_stance => n += 1,
                _ => break,
            }
        }
        n.max(1)
    }

    /// Appends the target for the step after the current last one.
    pub fn extend(&mut self, action: &Action, mut adjust: Option<FootholdHook<'_>>) -> Result<&WholeBodyState, WtgError> {
        action.validate(&self.params.limits)?;
        let dt = self.params.dt;
        let step = self.last_step() + 1;
        let contact = self.contact(step, action)?;
        let prev = self.back().clone();

        let yaw = prev.yaw() + action.yaw_rate * dt;
        let rot = Rotation2::new(yaw);
        let v_xy = rot * action.v_cmd.xy();
        let pd_b = Vector6::new(v_xy.x, v_xy.y, action.v_cmd.z, 0.0, 0.0, action.yaw_rate);
        let mut p_b = prev.p_b;
        for i in [0, 1, 2, 5] {
            p_b[i] += pd_b[i] * dt;
        }
        let pdd_b = (pd_b - prev.pd_b) / dt;

        let mut next = WholeBodyState {
            p_b,
            pd_b,
            pdd_b,
            p_f: prev.p_f,
            pd_f: [Vector3::zeros(); 4],
            pdd_f: [Vector3::zeros(); 4],
            contact,
        };

        for leg in LegId::ALL {
            let i = leg.index();
            let was_stance = prev.contact.in_contact(leg);
            if contact.in_contact(leg) {
                if !was_stance {
                    if let Some(plan) = self.swings[i] {
                        let phase = (step - plan.liftoff_step) as f64 / plan.duration_steps() as f64;
                        next.p_f[i] = swing_trajectory(&plan.start, &plan.target, phase, 0.0, 1.0).0;
                    }
                    next.p_f[i].z = 0.0;
                }
                self.swings[i] = None;
                continue;
            }
            if self.swings[i].is_none() {
                let plan = self.plan_swing(leg, step, &prev, &next, action, &mut adjust);
                self.swings[i] = Some(plan);
            }
            let plan = self.swings[i].expect("swing plan just ensured");
            let n = plan.duration_steps();
            let phase = (step - plan.liftoff_step) as f64 / n as f64;
            let (p, v, a) =
                swing_trajectory(&plan.start, &plan.target, phase, self.params.swing_clearance, n as f64 * dt);
            next.p_f[i] = p;
            if phase < 1.0 {
                next.pd_f[i] = v;
                next.pdd_f[i] = a;
            }
        }

        self.last_action = action.clone();
        self.states.push_back(next);
        Ok(self.back())
    }

    fn plan_swing(
        &mut self,
        leg: LegId,
        step: i64,
        prev: &WholeBodyState,
        next: &WholeBodyState,
        action: &Action,
        adjust: &mut Option<FootholdHook<'_>>,
    ) -> SwingPlan {
        let dt = self.params.dt;
        let n_swing = self.predicted_run(leg, step, false, action);
        let touchdown_step = step + n_swing;
        let n_stance = self.predicted_run(leg, touchdown_step, true, action);

        // Body pose at touchdown, extrapolated at the commanded velocity.
        let lead = n_swing as f64 * dt;
        let v_xy = next.pd_b.fixed_rows::<2>(0).into_owned();
        let body_td = next.p_b.fixed_rows::<2>(0) + v_xy * lead;
        let yaw_td = next.yaw() + action.yaw_rate * lead;
        let hip = body_td + Rotation2::new(yaw_td) * self.foot_offsets[leg.index()];

        let v_prev = prev.pd_b.fixed_rows::<2>(0).into_owned();
        let offset = raibert_foothold(v_prev, v_xy, n_stance as f64 * dt, self.params.raibert_gain);
        let nominal = hip + offset;
        let chosen = match adjust {
            Some(f) => f(leg, nominal),
            None => nominal,
        };
        let target = Vector3::new(chosen.x, chosen.y, 0.0);
        self.footholds.push(PlannedFoothold {
            leg,
            liftoff_step: step,
            touchdown_step,
            nominal,
            target,
        });
        SwingPlan {
            start: prev.p_f[leg.index()],
            target,
            liftoff_step: step,
            touchdown_step,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), WtgError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend(WholeBodyState::csv_header());
        w.write_record(&header)?;
        for (k, s) in self.states.iter().enumerate() {
            let mut rec = vec![(self.first_step + k as i64).to_string()];
            rec.extend(s.to_row().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trot_traj() -> (RobotModel, DesiredTrajectory) {
        let model = RobotModel::default();
        let init = WholeBodyState::standing(&model, 0.0, 0.0);
        let traj = DesiredTrajectory::new(&model, GaitMode::trot(10), WtgParams::default(), init).unwrap();
        (model, traj)
    }

    #[test]
    fn raibert_examples() {
        let o = raibert_foothold(Vector2::new(1.0, 0.0), Vector2::new(1.0, 0.0), 0.18, 0.7);
        assert!((o - Vector2::new(0.09, 0.0)).norm() < 1e-15);
        assert_eq!(raibert_foothold(Vector2::zeros(), Vector2::zeros(), 0.18, 0.03), Vector2::zeros());
        let o = raibert_foothold(Vector2::new(1.2, 0.0), Vector2::new(1.0, 0.0), 0.18, 0.03);
        assert!((o - Vector2::new(0.114, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn bezier_endpoints_and_apex() {
        let a = Vector3::new(0.1, 0.2, 0.0);
        let b = Vector3::new(0.4, 0.1, 0.0);
        assert_eq!(swing_trajectory(&a, &b, 0.0, 0.08, 0.18).0, a);
        assert!((swing_trajectory(&a, &b, 1.0, 0.08, 0.18).0 - b).norm() < 1e-15);
        let o = Vector3::zeros();
        let (p, v, _) = swing_trajectory(&o, &o, 0.5, 0.08, 0.18);
        assert!((p.z - 0.08).abs() < 1e-15);
        assert!(v.z.abs() < 1e-15);
    }

    #[test]
    fn bezier_derivatives_match_finite_differences() {
        let a = Vector3::new(0.0, 0.1, 0.0);
        let b = Vector3::new(0.3, 0.12, 0.02);
        let t_sw = 0.18;
        for &s in &[0.1, 0.4, 0.77] {
            let h = 1e-6;
            let (_, v, acc) = swing_trajectory(&a, &b, s, 0.08, t_sw);
            let (pp, vp, _) = swing_trajectory(&a, &b, s + h, 0.08, t_sw);
            let (pm, vm, _) = swing_trajectory(&a, &b, s - h, 0.08, t_sw);
            assert!(((pp - pm) / (2.0 * h * t_sw) - v).norm() < 1e-7);
            assert!(((vp - vm) / (2.0 * h * t_sw) - acc).norm() < 1e-5);
        }
    }

    #[test]
    fn zero_action_is_a_fixed_point() {
        let (_, mut traj) = trot_traj();
        let before = traj.back().p_b;
        traj.extend(&Action::stand(traj.mode()), None).unwrap();
        assert_eq!(traj.back().p_b, before);
        assert_eq!(traj.back().pdd_b, Vector6::zeros());
    }

    #[test]
    fn unit_forward_step_from_rest() {
        let (_, mut traj) = trot_traj();
        let x0 = traj.back().p_b.x;
        let s = traj.extend(&Action::forward(1.0, &GaitMode::trot(10)), None).unwrap();
        assert!((s.p_b.x - x0 - 0.036).abs() < 1e-15);
        assert!((s.pdd_b.x - 1.0 / 0.036).abs() < 1e-9);
        assert_eq!(s.pd_b[3], 0.0);
        assert_eq!(s.pd_b[4], 0.0);
    }

    #[test]
    fn window_starts_at_zero_with_horizon_entries() {
        let (_, traj) = trot_traj();
        assert_eq!(traj.first_step(), 0);
        assert_eq!(traj.len(), 10);
        assert_eq!(traj.last_step(), 9);
    }

    #[test]
    fn out_of_bounds_action_rejected() {
        let (_, mut traj) = trot_traj();
        let a = Action::forward(3.0, traj.mode());
        assert!(matches!(traj.extend(&a, None), Err(WtgError::ActionOutOfBounds { axis: "vx", .. })));
        let mut b = Action::stand(traj.mode());
        b.v_cmd.z = -3.5;
        assert!(traj.extend(&b, None).is_err());
    }

    #[test]
    fn steady_trot_footholds_are_evenly_spaced() {
        let (_, mut traj) = trot_traj();
        let mode = *traj.mode();
        traj.take_footholds();
        for _ in 0..60 {
            traj.extend(&Action::forward(1.0, &mode), None).unwrap();
        }
        let lf: Vec<_> = traj.take_footholds().into_iter().filter(|f| f.leg == LegId::LF).collect();
        let tail = &lf[lf.len() - 3..];
        for w in tail.windows(2) {
            assert!((w[1].target.x - w[0].target.x - 0.36).abs() < 1e-9);
        }
    }

    #[test]
    fn hook_moves_footholds() {
        let (_, mut traj) = trot_traj();
        let mode = *traj.mode();
        let mut hook = |_: LegId, p: Vector2<f64>| p + Vector2::new(0.01, 0.0);
        traj.take_footholds();
        for _ in 0..12 {
            traj.extend(&Action::forward(0.5, &mode), Some(&mut hook)).unwrap();
        }
        for f in traj.take_footholds() {
            assert!((f.target.x - f.nominal.x - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn swing_feet_touch_down_on_their_targets() {
        let (_, mut traj) = trot_traj();
        let mode = *traj.mode();
        let mut landed = 0;
        for _ in 0..40 {
            let prev = traj.back().clone();
            let plans = traj.swings;
            let s = traj.extend(&Action::forward(0.8, &mode), None).unwrap().clone();
            for leg in LegId::ALL {
                if s.contact.in_contact(leg) && !prev.contact.in_contact(leg) {
                    let plan = plans[leg.index()].unwrap();
                    assert!((s.p_f[leg.index()] - plan.target).norm() < 1e-12);
                    landed += 1;
                }
            }
        }
        assert!(landed > 10);
    }

    #[test]
    fn csv_dump_has_58_state_columns() {
        let (_, traj) = trot_traj();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 1 + STATE_COLUMNS + 4);
        assert_eq!(lines.count(), traj.len());
    }

    proptest! {
        #[test]
        fn interpolation_invariant_and_level_targets(
            cmds in proptest::collection::vec((-2.5f64..2.5, -1.0f64..1.0, -3.0f64..3.0, -1.0f64..1.0), 1..40),
            pronk in any::<bool>(),
        ) {
            let model = RobotModel::default();
            let mode = if pronk { GaitMode::pronk(10) } else { GaitMode::trot(10) };
            let init = WholeBodyState::standing(&model, 0.3, -0.2);
            let mut traj = DesiredTrajectory::new(&model, mode, WtgParams::default(), init).unwrap();
            for (vx, vy, vz, wz) in cmds {
                let a = Action { v_cmd: Vector3::new(vx, vy, vz), yaw_rate: wz, contact_bits: vec![] };
                let prev = traj.back().clone();
                let step = traj.last_step() + 1;
                let s = traj.extend(&a, None).unwrap();
                for i in [0, 1, 2, 5] {
                    prop_assert!((s.p_b[i] - prev.p_b[i] - s.pd_b[i] * 0.036).abs() < 1e-9);
                }
                prop_assert_eq!(s.pd_b[3], 0.0);
                prop_assert_eq!(s.pd_b[4], 0.0);
                prop_assert_eq!(s.contact, contact_at(&mode, step as usize, None).unwrap());
            }
        }

        #[test]
        fn raibert_is_linear_when_on_command(v in -2.0f64..2.0, t in 0.05f64..0.5, k in 0.0f64..0.1) {
            let o1 = raibert_foothold(Vector2::new(v, 0.0), Vector2::new(v, 0.0), t, k);
            let o2 = raibert_foothold(Vector2::new(2.0 * v, 0.0), Vector2::new(2.0 * v, 0.0), t, k);
            prop_assert!((o2 - o1 * 2.0).norm() < 1e-12);
        }

        #[test]
        fn swing_apex_equals_clearance(c in 0.01f64..0.2, x0 in -1.0f64..1.0, dx in -0.5f64..0.5) {
            let a = Vector3::new(x0, 0.0, 0.0);
            let b = Vector3::new(x0 + dx, 0.0, 0.0);
            let zmax = (0..=1000)
                .map(|i| swing_trajectory(&a, &b, i as f64 / 1000.0, c, 0.2).0.z)
                .fold(f64::MIN, f64::max);
            prop_assert!((zmax - c).abs() < 1e-12);
        }
    }
}
