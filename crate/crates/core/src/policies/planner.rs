//! Receding-horizon gap-aware speed planner.
//!
//! Every step the planner rolls the trajectory generator forward under each
//! candidate command and keeps the one whose predicted footholds stay
//! furthest from the gaps seen so far.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Observation, Policy, PolicyError, TerrainInput};
use crate::gait::GaitMode;
use crate::terrain::HeightmapWindow;
use crate::wtg::{Action, PlannedFoothold};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub vx_candidates: Vec<f64>,
    pub vz_candidates: Vec<f64>,
    pub yaw_rate_candidates: Vec<f64>,
    /// Contact-bit patterns tried in variable gaits; empty means all-stance only.
    pub bit_candidates: Vec<Vec<bool>>,
    pub nominal_speed: f64,
    pub lookahead_cycles: usize,
    /// Clearance a foothold must keep from the estimated gap edges, m.
    pub foot_margin: f64,
    /// Margins above this count as fully safe, m.
    pub margin_cap: f64,
    /// Margin credit per step for footholds that can still be replanned, m.
    pub replan_credit: f64,
    /// Score cost per m/s away from the nominal speed, m.
    pub speed_penalty: f64,
    pub vertical_penalty: f64,
    pub yaw_penalty: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            vx_candidates: (0..9).map(|i| 0.4 + 0.2 * i as f64).collect(),
            vz_candidates: vec![0.0, 0.5, 1.0],
            yaw_rate_candidates: vec![0.0],
            bit_candidates: Vec::new(),
            nominal_speed: 1.0,
            lookahead_cycles: 3,
            foot_margin: 0.01,
            margin_cap: 0.04,
            replan_credit: 0.002,
            speed_penalty: 0.02,
            vertical_penalty: 0.05,
            yaw_penalty: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GapEstimate {
    /// Bounds on the left edge.
    left: (f64, f64),
    /// Bounds on the right edge.
    right: (f64, f64),
}

/// Gap edges fused over successive heightmaps in world x. Each observation
/// brackets an edge between two cell centres; intersecting brackets from
/// shifted windows tightens them.
#[derive(Debug, Clone, Default)]
pub struct GapMap {
    gaps: Vec<GapEstimate>,
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if lo <= hi {
        (lo, hi)
    } else {
        b
    }
}

impl GapMap {
    pub fn update(&mut self, hm: &HeightmapWindow, base_x: f64, yaw: f64) {
        let col = crate::terrain::HEIGHTMAP_COLS / 2;
        let rows = crate::terrain::HEIGHTMAP_ROWS;
        let c = yaw.cos();
        let x_at = |i: usize| base_x + c * hm.row_offset(i);
        let mut i = 0;
        while i < rows {
            if !hm.is_gap_cell(i, col) {
                i += 1;
                continue;
            }
            let start = i;
            while i < rows && hm.is_gap_cell(i, col) {
                i += 1;
            }
            let end = i - 1;
            let left = if start == 0 { (f64::NEG_INFINITY, x_at(0)) } else { (x_at(start - 1), x_at(start)) };
            let right = if end + 1 == rows { (x_at(end), f64::INFINITY) } else { (x_at(end), x_at(end + 1)) };
            let seen = GapEstimate { left, right };
            match self.gaps.iter_mut().find(|g| g.left.0 <= seen.right.1 && seen.left.0 <= g.right.1) {
                Some(g) => {
                    g.left = intersect(g.left, seen.left);
                    g.right = intersect(g.right, seen.right);
                }
                None => self.gaps.push(seen),
            }
        }
    }

    /// Signed distance from `x` to the conservative gap extents.
    pub fn margin(&self, x: f64) -> f64 {
        let mut best = f64::INFINITY;
        for g in &self.gaps {
            let (l, r) = (g.left.0, g.right.1);
            if x > l && x < r {
                return -(x - l).min(r - x);
            }
            best = best.min((x - l).abs()).min((x - r).abs());
        }
        best
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn clear(&mut self) {
        self.gaps.clear();
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub action: Action,
    pub score: f64,
    /// Smallest margin among footholds that can no longer be replanned.
    pub committed_margin: f64,
    pub footholds: Vec<PlannedFoothold>,
}

pub struct PlannerPolicy {
    params: PlannerParams,
    mode: GaitMode,
    map: GapMap,
}

impl PlannerPolicy {
    pub fn new(params: PlannerParams, mode: GaitMode) -> Self {
        Self { params, mode, map: GapMap::default() }
    }

    pub fn map(&self) -> &GapMap {
        &self.map
    }

    fn candidates(&self) -> Vec<Action> {
        let mut vx = self.params.vx_candidates.clone();
        vx.sort_by(f64::total_cmp);
        let bits = if self.mode.kind.is_fixed() {
            vec![Vec::new()]
        } else if self.params.bit_candidates.is_empty() {
            vec![self.mode.standing_bits()]
        } else {
            self.params.bit_candidates.clone()
        };
        let mut out = Vec::new();
        for &x in &vx {
            for &z in &self.params.vz_candidates {
                for &w in &self.params.yaw_rate_candidates {
                    for b in &bits {
                        out.push(Action { v_cmd: Vector3::new(x, 0.0, z), yaw_rate: w, contact_bits: b.clone() });
                    }
                }
            }
        }
        out
    }

    /// Scores every candidate with the planner's own forward model.
    pub fn evaluate(&self, obs: &Observation) -> Result<Vec<Evaluation>, PolicyError> {
        let traj = obs.trajectory.as_ref().ok_or(PolicyError::MissingInput("trajectory"))?;
        let p = &self.params;
        let first = traj.last_step() + 1;
        let replan_from = first + self.mode.cycle_steps as i64;
        let steps = p.lookahead_cycles.max(1) * self.mode.cycle_steps;
        let mut out = Vec::new();
        for action in self.candidates() {
            let mut sim = traj.clone();
            sim.take_footholds();
            let mut valid = true;
            for _ in 0..steps {
                if sim.extend(&action, None).is_err() {
                    valid = false;
                    break;
                }
            }
            if !valid {
                continue;
            }
            let footholds = sim.take_footholds();
            let mut committed = f64::INFINITY;
            let mut worst = f64::INFINITY;
            for f in &footholds {
                let m = self.map.margin(f.target.x) - p.foot_margin;
                if f.liftoff_step < replan_from {
                    committed = committed.min(m);
                }
                let credit = p.replan_credit * (f.liftoff_step - replan_from).max(0) as f64;
                worst = worst.min(m.min(p.margin_cap) + credit);
            }
            let worst = worst.min(p.margin_cap);
            let score = worst
                - p.speed_penalty * (action.v_cmd.x - p.nominal_speed).abs()
                - p.vertical_penalty * action.v_cmd.z.abs()
                - p.yaw_penalty * action.yaw_rate.abs();
            out.push(Evaluation { action, score, committed_margin: committed, footholds });
        }
        Ok(out)
    }

    /// Best candidate among those whose committed footholds are safe. Ties go
    /// to the lower speed.
    pub fn plan(&mut self, obs: &Observation) -> Result<Evaluation, PolicyError> {
        let hm = obs.heightmap.as_ref().ok_or(PolicyError::MissingInput("heightmap"))?;
        self.map.update(hm, obs.base_position.x, obs.proprio[3]);
        let evals = self.evaluate(obs)?;
        let mut best: Option<Evaluation> = None;
        for e in evals {
            if e.committed_margin <= 0.0 {
                continue;
            }
            if best.as_ref().is_none_or(|b| e.score > b.score) {
                best = Some(e);
            }
        }
        best.ok_or_else(|| {
            let slowest = self.params.vx_candidates.iter().copied().fold(f64::INFINITY, f64::min);
            let mut fallback = Action::forward(slowest.min(self.params.nominal_speed), &self.mode);
            fallback.contact_bits = if self.mode.kind.is_fixed() { Vec::new() } else { self.mode.standing_bits() };
            PolicyError::NoSafeCandidate { fallback }
        })
    }
}

impl Policy for PlannerPolicy {
    fn act(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        self.plan(obs).map(|e| e.action)
    }

    fn terrain_input(&self) -> TerrainInput {
        TerrainInput::Heightmap
    }

    fn wants_trajectory(&self) -> bool {
        true
    }

    fn reset(&mut self) {
        self.map.clear();
    }
}
