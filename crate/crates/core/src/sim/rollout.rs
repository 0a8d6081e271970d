use std::io::Write;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{body_rotation, check_termination, reward, EpisodeStatus, SimEventKind, SimParams, SimState};
use crate::gait::GaitMode;
use crate::grf_mpc::{GrfMpc, MpcError, MpcParams, SolveStats};
use crate::model::{LegId, RobotModel};
use crate::policies::{Observation, Policy, PolicyError, Proprioception, TerrainInput};
use crate::terrain::{
    camera_pose_from_body, preprocess_depth, render_depth, CameraIntrinsics, CameraMount, GapWorld,
    HeightmapParams, HeightmapWindow, TerrainError, TerrainSample,
};
use crate::wbic::{joint_pd, whole_body_command, BodyPose, JointCommand, WbicParams, Vector12};
use crate::wtg::{Action, DesiredTrajectory, WholeBodyState, WtgError, WtgParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Wtg(#[from] WtgError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub model: RobotModel,
    pub gait: GaitMode,
    pub wtg: WtgParams,
    pub mpc: MpcParams,
    pub wbic: WbicParams,
    pub sim: SimParams,
    pub heightmap: HeightmapParams,
    pub camera: CameraMount,
    /// Keep one log row per control step.
    pub record: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            model: RobotModel::default(),
            gait: GaitMode::trot(10),
            wtg: WtgParams::default(),
            mpc: MpcParams::default(),
            wbic: WbicParams::default(),
            sim: SimParams::default(),
            heightmap: HeightmapParams::default(),
            camera: CameraMount::default(),
            record: false,
        }
    }
}

impl RolloutConfig {
    pub fn substeps(&self) -> usize {
        (self.wtg.dt / self.sim.dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Touchdown {
    pub step: usize,
    pub leg: LegId,
    pub x: f64,
    pub y: f64,
    pub in_gap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapOutcome {
    pub left: f64,
    pub right: f64,
    pub attempted: bool,
    pub crossed: bool,
}

impl GapOutcome {
    pub fn width(&self) -> f64 {
        self.right - self.left
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub time: f64,
    pub position: [f64; 3],
    pub euler: [f64; 3],
    pub velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
    pub feet: [[f64; 3]; 4],
    pub forces: [[f64; 3]; 4],
    pub contact: [bool; 4],
    /// Commanded vx, vy, vz and yaw rate.
    pub command: [f64; 4],
    pub reward: f64,
    pub mpc_iterations: usize,
    pub mpc_residual: f64,
}

impl LogRow {
    pub fn csv_header() -> Vec<String> {
        let mut h = vec!["step".to_string(), "time".to_string()];
        for (name, axes) in [
            ("p", ["x", "y", "z"]),
            ("euler", ["roll", "pitch", "yaw"]),
            ("v", ["x", "y", "z"]),
            ("omega", ["x", "y", "z"]),
        ] {
            h.extend(axes.iter().map(|a| format!("{name}_{a}")));
        }
        for prefix in ["foot", "force"] {
            for leg in LegId::ALL {
                h.extend(["x", "y", "z"].iter().map(|a| format!("{prefix}_{leg:?}_{a}").to_lowercase()));
            }
        }
        h.extend(LegId::ALL.iter().map(|l| format!("contact_{l:?}").to_lowercase()));
        h.extend(["cmd_vx", "cmd_vy", "cmd_vz", "cmd_yaw_rate", "reward", "mpc_iterations", "mpc_residual"].map(String::from));
        h
    }

    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![self.step.to_string(), self.time.to_string()];
        let vecs = [self.position, self.euler, self.velocity, self.angular_velocity];
        r.extend(vecs.iter().flatten().map(f64::to_string));
        r.extend(self.feet.iter().chain(self.forces.iter()).flatten().map(f64::to_string));
        r.extend(self.contact.iter().map(|&c| u8::from(c).to_string()));
        r.extend(self.command.iter().map(f64::to_string));
        r.push(self.reward.to_string());
        r.push(self.mpc_iterations.to_string());
        r.push(self.mpc_residual.to_string());
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub status: EpisodeStatus,
    pub steps: usize,
    pub total_reward: f64,
    pub final_position: Vector3<f64>,
    pub gaps: Vec<GapOutcome>,
    pub touchdowns: Vec<Touchdown>,
    pub mpc_solves: usize,
    pub mpc_unconverged: usize,
    /// Steps where the policy found no safe action and fell back.
    pub fallbacks: usize,
    pub overextended: usize,
    pub log: Vec<LogRow>,
    /// Solver statistics per control step, kept when recording.
    pub mpc_stats: Vec<SolveStats>,
}

impl EpisodeResult {
    pub fn write_log<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LogRow::csv_header())?;
        for row in &self.log {
            w.write_record(row.csv_record())?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Judges every gap from the touchdown record. A gap counts as attempted once
/// any foot lands past its near edge, or when the episode stopped short of
/// the finish in front of it. It is crossed once every leg has landed on or
/// past its far edge.
pub fn gap_outcomes(world: &GapWorld, touchdowns: &[Touchdown], status: EpisodeStatus) -> Vec<GapOutcome> {
    let mut out: Vec<GapOutcome> = world
        .gaps()
        .iter()
        .map(|&(left, right)| {
            let attempted = touchdowns.iter().any(|t| t.x > left);
            let crossed = LegId::ALL.iter().all(|&leg| touchdowns.iter().any(|t| t.leg == leg && t.x >= right));
            GapOutcome { left, right, attempted: attempted || crossed, crossed }
        })
        .collect();
    if status != EpisodeStatus::ReachedEnd {
        if let Some(g) = out.iter_mut().find(|g| !g.crossed) {
            g.attempted = true;
        }
    }
    out
}

fn body_pose(state: &SimState) -> BodyPose {
    BodyPose {
        position: state.position(),
        rotation: body_rotation(&state.euler()),
        linear_velocity: state.velocity(),
        angular_velocity: state.omega,
    }
}

/// Joint angles reconstructing the measured feet; legs out of reach keep
/// their previous angles.
fn joint_positions(model: &RobotModel, state: &SimState, prev: &Vector12) -> Vector12 {
    let pose = body_pose(state);
    let mut q = *prev;
    for leg in LegId::ALL {
        let i = leg.index();
        let rel = pose.rotation.transpose() * (state.body.p_f[i] - pose.position) - model.hip_offset(leg);
        if let Ok(ql) = model.inverse_kinematics(leg, &rel) {
            q.fixed_rows_mut::<3>(3 * i).copy_from(&ql);
        }
    }
    q
}

fn proprioception(state: &SimState, q: &Vector12, qd: &Vector12) -> Proprioception {
    let mut p = Proprioception::zeros();
    let e = state.euler();
    let v = state.velocity();
    p[0] = state.position().z;
    p.fixed_rows_mut::<3>(1).copy_from(&e);
    p.fixed_rows_mut::<3>(4).copy_from(&v);
    p.fixed_rows_mut::<3>(7).copy_from(&state.omega);
    p.fixed_rows_mut::<12>(10).copy_from(q);
    p.fixed_rows_mut::<12>(22).copy_from(qd);
    p
}

/// Horizontal shift of the swing feet towards the capture point of the
/// measured body relative to the planned one. A trot has no other way to
/// stop the drift of its two-point support; the shift stays at the level of
/// the tracking error.
fn capture_offset(state: &SimState, desired: &WholeBodyState, height: f64) -> Vector3<f64> {
    let d = state.position() - desired.position();
    let dv = state.velocity() - desired.linear_velocity();
    let t = (height / crate::model::GRAVITY).sqrt();
    Vector3::new(d.x + t * dv.x, d.y + t * dv.y, 0.0)
}

/// Builds what the policy sees at the current control step.
#[allow(clippy::too_many_arguments)]
pub fn observe(
    cfg: &RolloutConfig,
    world: &GapWorld,
    state: &SimState,
    q: &Vector12,
    qd: &Vector12,
    prev_action: &Action,
    traj: &DesiredTrajectory,
    policy: &dyn Policy,
) -> Result<Observation, SimError> {
    let p = state.position();
    let e = state.euler();
    let heightmap = (policy.terrain_input() == TerrainInput::Heightmap)
        .then(|| HeightmapWindow::sample(world, p.x, p.y, e.z, &cfg.heightmap));
    let depth = if policy.terrain_input() == TerrainInput::Depth {
        let pose = camera_pose_from_body(&p, &e, &cfg.camera);
        let k = CameraIntrinsics::default();
        Some(preprocess_depth(&render_depth(world, &pose, &k))?)
    } else {
        None
    };
    let phase = if cfg.gait.kind.is_fixed() {
        (state.step % cfg.gait.cycle_steps) as f64 / cfg.gait.cycle_steps as f64
    } else {
        0.0
    };
    Ok(Observation {
        step: state.step,
        proprio: proprioception(state, q, qd),
        base_position: p,
        heightmap,
        depth,
        prev_action: prev_action.clone(),
        phase,
        trajectory: policy.wants_trajectory().then(|| traj.clone()),
    })
}

/// Runs one episode: the policy acts every control step, the trajectory
/// generator turns actions into whole-body targets, the force planner picks
/// ground forces and the simulator integrates them. Starts standing at the
/// origin.
pub fn rollout(policy: &mut dyn Policy, world: &GapWorld, cfg: &RolloutConfig) -> Result<EpisodeResult, SimError> {
    let model = &cfg.model;
    let mode = cfg.gait;
    policy.reset();
    let mut state = SimState::standing(model, 0.0, 0.0);
    let mut traj = DesiredTrajectory::new(model, mode, cfg.wtg, state.body.clone())?;
    let mut mpc = GrfMpc::new(model.clone(), cfg.mpc, cfg.wtg.dt);
    let substeps = cfg.substeps();
    let dt = cfg.sim.dt;
    let finish_x = world.finish_x();

    let mut q = joint_positions(model, &state, &Vector12::zeros());
    let mut qd = Vector12::zeros();
    let mut cmd = JointCommand::zeros();
    let mut prev_action = Action::stand(&mode);
    let mut result = EpisodeResult {
        status: EpisodeStatus::Running,
        steps: 0,
        total_reward: 0.0,
        final_position: state.position(),
        gaps: Vec::new(),
        touchdowns: Vec::new(),
        mpc_solves: 0,
        mpc_unconverged: 0,
        fallbacks: 0,
        overextended: 0,
        log: Vec::new(),
        mpc_stats: Vec::new(),
    };

    while result.status == EpisodeStatus::Running {
        let obs = observe(cfg, world, &state, &q, &qd, &prev_action, &traj, policy)?;
        let action = match policy.act(&obs) {
            Ok(a) => a,
            Err(PolicyError::NoSafeCandidate { fallback }) => {
                result.fallbacks += 1;
                fallback
            }
            Err(e) => return Err(e.into()),
        };
        {
            let mut hook = |leg: LegId, nominal: Vector2<f64>| policy.adjust_foothold(leg, nominal, world);
            traj.extend(&action, Some(&mut hook))?;
        }
        traj.take_footholds();

        let plan = match mpc.solve(&traj, &state.body) {
            Ok(plan) => plan,
            Err(MpcError::NotConverged { plan }) => {
                result.mpc_unconverged += 1;
                *plan
            }
            Err(e) => return Err(e.into()),
        };
        result.mpc_solves += 1;
        let forces = plan.current();

        let start = state.clone();
        let from = traj.front().clone();
        let to = traj.get(1).unwrap_or(&from).clone();
        let contact = from.contact;
        let capture = capture_offset(&state, &from, cfg.model.standing_height);
        let mut q_prev = q;
        for n in 0..substeps {
            let s = (n + 1) as f64 / substeps as f64;
            let swing = LegId::ALL.map(|l| from.p_f[l.index()].lerp(&to.p_f[l.index()], s) + capture);
            let next = state.step(model, world, contact, &forces, &swing, dt);
            for ev in &next.events {
                match ev.kind {
                    SimEventKind::Touchdown => {
                        let p = next.anchors[ev.leg.index()].unwrap_or(next.body.p_f[ev.leg.index()]);
                        result.touchdowns.push(Touchdown {
                            step: state.step,
                            leg: ev.leg,
                            x: p.x,
                            y: p.y,
                            in_gap: matches!(world.height_at(p.x, p.y), TerrainSample::Gap),
                        });
                    }
                    SimEventKind::LegOverextended => result.overextended += 1,
                    _ => {}
                }
            }
            state = next;
            if (n + 1) % cfg.sim.wbic_every == 0 {
                let q_new = joint_positions(model, &state, &q);
                qd = (q_new - q_prev) / (dt * cfg.sim.wbic_every as f64);
                q_prev = q_new;
                q = q_new;
                let foot_vel = LegId::ALL.map(|l| (to.p_f[l.index()] - from.p_f[l.index()]) / cfg.wtg.dt);
                cmd = whole_body_command(
                    model,
                    &cfg.wbic,
                    contact,
                    &forces,
                    &swing,
                    &foot_vel,
                    &body_pose(&state),
                    &q,
                );
            }
            // Joint torques are computed for logging parity with the hardware
            // loop; the reduced-order body is driven by the forces directly.
            let _tau = joint_pd(&cmd, &q, &qd, cfg.wbic.torque_limit);
            let status = check_termination(&state, &cfg.sim, f64::INFINITY);
            if status.is_terminal() {
                result.status = status;
                break;
            }
        }
        state.step += 1;
        traj.advance();
        let r = reward(&start, &state, qd.as_slice(), &cfg.sim.reward);
        result.total_reward += r;
        if result.status == EpisodeStatus::Running {
            result.status = check_termination(&state, &cfg.sim, finish_x);
        }
        if cfg.record {
            let arr = |v: Vector3<f64>| [v.x, v.y, v.z];
            result.log.push(LogRow {
                step: state.step,
                time: state.time,
                position: arr(state.position()),
                euler: arr(state.euler()),
                velocity: arr(state.velocity()),
                angular_velocity: arr(state.omega),
                feet: state.body.p_f.map(arr),
                forces: forces.map(arr),
                contact: LegId::ALL.map(|l| contact.in_contact(l)),
                command: [action.v_cmd.x, action.v_cmd.y, action.v_cmd.z, action.yaw_rate],
                reward: r,
                mpc_iterations: plan.stats.iterations,
                mpc_residual: plan.stats.kkt_residual,
            });
            result.mpc_stats.push(plan.stats.clone());
        }
        prev_action = action;
    }

    result.steps = state.step;
    result.final_position = state.position();
    result.gaps = gap_outcomes(world, &result.touchdowns, result.status);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::BlindPolicy;
    use crate::terrain::{Segment, SegmentKind};

    fn one_gap(left: f64, width: f64) -> GapWorld {
        GapWorld::from_segments(
            vec![
                Segment { kind: SegmentKind::Flat, width: left + 1.0 },
                Segment { kind: SegmentKind::Gap, width },
                Segment { kind: SegmentKind::Flat, width: 3.0 },
            ],
            -1.0,
            0,
        )
        .unwrap()
    }

    #[test]
    fn standing_in_place_stays_put() {
        let cfg = RolloutConfig { sim: SimParams { max_steps: 60, ..SimParams::default() }, ..Default::default() };
        let mut p = BlindPolicy::new(0.0, &cfg.gait);
        let r = rollout(&mut p, &GapWorld::flat(10.0), &cfg).unwrap();
        assert_eq!(r.status, EpisodeStatus::TimedOut);
        let d = r.final_position - Vector3::new(0.0, 0.0, cfg.model.standing_height);
        assert!(d.norm() < 0.05, "drift {d}");
        assert_eq!(r.overextended, 0);
    }

    #[test]
    fn trot_reaches_end_of_flat_world() {
        let cfg = RolloutConfig { record: true, ..Default::default() };
        let mut p = BlindPolicy::new(1.0, &cfg.gait);
        let world = GapWorld::flat(6.0);
        let r = rollout(&mut p, &world, &cfg).unwrap();
        assert_eq!(r.status, EpisodeStatus::ReachedEnd, "{:?}", r.final_position);
        assert!(r.touchdowns.iter().all(|t| !t.in_gap));
        assert_eq!(r.log.len(), r.steps);
        let mut buf = Vec::new();
        r.write_log(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), r.steps + 1);
    }

    #[test]
    fn rollouts_are_deterministic() {
        let cfg = RolloutConfig::default();
        let world = one_gap(0.7, 0.1);
        let a = rollout(&mut BlindPolicy::new(1.0, &cfg.gait), &world, &cfg).unwrap();
        let b = rollout(&mut BlindPolicy::new(1.0, &cfg.gait), &world, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wide_gap_is_never_crossed_blind() {
        let cfg = RolloutConfig::default();
        let world = one_gap(0.7, 0.4);
        let r = rollout(&mut BlindPolicy::new(1.0, &cfg.gait), &world, &cfg).unwrap();
        assert_eq!(r.status, EpisodeStatus::SteppedInGap);
        assert_eq!(r.gaps.len(), 1);
        assert!(r.gaps[0].attempted && !r.gaps[0].crossed);
    }

    #[test]
    fn gap_accounting() {
        let world = one_gap(1.0, 0.1);
        let td = |leg, x| Touchdown { step: 0, leg, x, y: 0.0, in_gap: false };
        let before = vec![td(LegId::LF, 0.5)];
        let g = gap_outcomes(&world, &before, EpisodeStatus::ReachedEnd);
        assert!(!g[0].attempted);
        let g = gap_outcomes(&world, &before, EpisodeStatus::Fell);
        assert!(g[0].attempted && !g[0].crossed);
        let all: Vec<_> = LegId::ALL.iter().map(|&l| td(l, 1.2)).collect();
        let g = gap_outcomes(&world, &all, EpisodeStatus::ReachedEnd);
        assert!(g[0].attempted && g[0].crossed);
    }
}
