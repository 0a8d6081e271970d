//! High-level policies that emit one action per control step.

mod external;
mod fpa;
mod planner;
mod pmtg;

use nalgebra::{SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::{GaitKind, GaitMode};
use crate::model::LegId;
use crate::terrain::{DepthImage, GapWorld, HeightmapWindow};
use crate::wtg::{Action, DesiredTrajectory};

pub use external::ExternalPolicy;
pub use fpa::{fpa_adapt_foothold, FootholdAdaptation, FpaPolicy};
pub use planner::{GapMap, PlannerParams, PlannerPolicy};
pub use pmtg::{pmtg_tg, PmtgPolicy, PMTG_DEPTH, PMTG_HEIGHT, PMTG_OFFSET};

pub type Proprioception = SVector<f64, 34>;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("no candidate action avoids the gaps ahead")]
    NoSafeCandidate { fallback: Action },
    #[error("policy needs {0} in its observation")]
    MissingInput(&'static str),
    #[error("external policy: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerrainInput {
    None,
    Heightmap,
    Depth,
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub step: usize,
    /// Height, orientation (3), linear velocity (3), angular velocity (3),
    /// joint positions (12), joint velocities (12).
    pub proprio: Proprioception,
    /// World-frame body position from odometry.
    pub base_position: Vector3<f64>,
    pub heightmap: Option<HeightmapWindow>,
    pub depth: Option<DepthImage>,
    pub prev_action: Action,
    /// Position in the gait cycle, in [0, 1).
    pub phase: f64,
    /// Snapshot of the committed whole-body targets.
    pub trajectory: Option<DesiredTrajectory>,
}

pub trait Policy: Send {
    fn act(&mut self, obs: &Observation) -> Result<Action, PolicyError>;

    fn terrain_input(&self) -> TerrainInput {
        TerrainInput::None
    }

    fn wants_trajectory(&self) -> bool {
        false
    }

    /// Final say on a nominal foothold (world xy). Only privileged baselines
    /// look at the world here.
    fn adjust_foothold(&mut self, _leg: LegId, nominal: Vector2<f64>, _world: &GapWorld) -> Vector2<f64> {
        nominal
    }

    fn reset(&mut self) {}
}

/// Constant velocity, terrain-blind.
#[derive(Debug, Clone)]
pub struct BlindPolicy {
    action: Action,
}

impl BlindPolicy {
    pub fn new(v_cmd: f64, mode: &GaitMode) -> Self {
        Self { action: Action::forward(v_cmd, mode) }
    }
}

impl Policy for BlindPolicy {
    fn act(&mut self, _obs: &Observation) -> Result<Action, PolicyError> {
        Ok(self.action.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Blind {
        v_cmd: f64,
    },
    Fpa {
        v_cmd: f64,
        delta_max: f64,
        #[serde(default = "fpa::default_grid")]
        grid: f64,
        #[serde(default = "fpa::default_margin")]
        margin: f64,
    },
    Planner(PlannerParams),
    Pmtg {
        frequency: f64,
    },
    /// Actions read line by line from a file, one `vx vy vz yaw_rate [bits]` per line.
    External {
        path: String,
    },
}

impl PolicyKind {
    /// Gait the policy runs under; PMTG drives contacts itself.
    pub fn gait(&self, configured: GaitMode) -> GaitMode {
        match self {
            PolicyKind::Pmtg { .. } => GaitMode { kind: GaitKind::Unconstrained, ..configured },
            _ => configured,
        }
    }

    pub fn build(&self, mode: &GaitMode, control_dt: f64) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match self {
            PolicyKind::Blind { v_cmd } => Box::new(BlindPolicy::new(*v_cmd, mode)),
            PolicyKind::Fpa { v_cmd, delta_max, grid, margin } => Box::new(FpaPolicy::new(
                *v_cmd,
                mode,
                FootholdAdaptation { delta_max: *delta_max, grid: *grid, margin: *margin },
            )),
            PolicyKind::Planner(p) => Box::new(PlannerPolicy::new(p.clone(), *mode)),
            PolicyKind::Pmtg { frequency } => Box::new(PmtgPolicy::new(*frequency, control_dt)),
            PolicyKind::External { path } => Box::new(ExternalPolicy::open(path, *mode)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Blind { .. } => "blind",
            PolicyKind::Fpa { .. } => "fpa",
            PolicyKind::Planner(_) => "planner",
            PolicyKind::Pmtg { .. } => "pmtg",
            PolicyKind::External { .. } => "external",
        }
    }
}

#[cfg(test)]
pub(crate) fn test_observation(mode: &GaitMode) -> Observation {
    Observation {
        step: 0,
        proprio: Proprioception::zeros(),
        base_position: Vector3::new(0.0, 0.0, 0.28),
        heightmap: None,
        depth: None,
        prev_action: Action::stand(mode),
        phase: 0.0,
        trajectory: None,
    }
}
