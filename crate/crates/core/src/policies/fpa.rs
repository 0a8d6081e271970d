//! Constant-velocity walking with local foothold adaptation on the true terrain.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{Observation, Policy, PolicyError};
use crate::gait::GaitMode;
use crate::model::LegId;
use crate::terrain::GapWorld;
use crate::wtg::Action;

pub(super) fn default_grid() -> f64 {
    0.005
}

pub(super) fn default_margin() -> f64 {
    0.005
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootholdAdaptation {
    /// Largest displacement from the nominal foothold, m.
    pub delta_max: f64,
    pub grid: f64,
    /// Clearance a foothold needs from any gap edge, m.
    pub margin: f64,
}

/// Nearest safe point to `nominal` on an x-grid within `delta_max`. Ties go to
/// the smaller displacement, then to the backward side. Returns the nominal
/// point and `false` when nothing within reach is safe.
pub fn fpa_adapt_foothold(nominal: Vector2<f64>, world: &GapWorld, adapt: &FootholdAdaptation) -> (Vector2<f64>, bool) {
    if world.is_safe_foothold(nominal.x, nominal.y, adapt.margin) {
        return (nominal, true);
    }
    let steps = (adapt.delta_max / adapt.grid + 1e-9).floor() as i64;
    for k in 1..=steps {
        for sign in [-1.0, 1.0] {
            let x = nominal.x + sign * k as f64 * adapt.grid;
            if world.is_safe_foothold(x, nominal.y, adapt.margin) {
                return (Vector2::new(x, nominal.y), true);
            }
        }
    }
    (nominal, false)
}

#[derive(Debug, Clone)]
pub struct FpaPolicy {
    action: Action,
    adapt: FootholdAdaptation,
    failures: usize,
}

impl FpaPolicy {
    pub fn new(v_cmd: f64, mode: &GaitMode, adapt: FootholdAdaptation) -> Self {
        Self { action: Action::forward(v_cmd, mode), adapt, failures: 0 }
    }

    /// Footholds for which no safe point was within reach.
    pub fn failures(&self) -> usize {
        self.failures
    }
}

impl Policy for FpaPolicy {
    fn act(&mut self, _obs: &Observation) -> Result<Action, PolicyError> {
        Ok(self.action.clone())
    }

    fn adjust_foothold(&mut self, _leg: LegId, nominal: Vector2<f64>, world: &GapWorld) -> Vector2<f64> {
        let (p, ok) = fpa_adapt_foothold(nominal, world, &self.adapt);
        if !ok {
            self.failures += 1;
        }
        p
    }

    fn reset(&mut self) {
        self.failures = 0;
    }
}
