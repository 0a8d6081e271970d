//! Contact schedules for fixed, variable and unconstrained gaits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::LegId;

#[derive(Debug, Error, PartialEq)]
pub enum GaitError {
    #[error("{kind:?} gait needs {expected} contact bit(s), got {got}")]
    MissingContactBits { kind: GaitKind, expected: usize, got: usize },
    #[error("fixed gait cycle must be even and at least 2 steps, got {0}")]
    InvalidCycle(usize),
}

/// Per-foot contact flags ordered LF, RF, LR, RR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ContactState(pub [bool; 4]);

impl ContactState {
    pub const ALL_STANCE: ContactState = ContactState([true; 4]);
    pub const FLIGHT: ContactState = ContactState([false; 4]);

    pub fn in_contact(&self, leg: LegId) -> bool {
        self.0[leg.index()]
    }

    pub fn stance_count(&self) -> usize {
        self.0.iter().filter(|&&c| c).count()
    }

    pub fn as_f64(&self) -> [f64; 4] {
        self.0.map(|c| if c { 1.0 } else { 0.0 })
    }
}

impl From<[u8; 4]> for ContactState {
    fn from(bits: [u8; 4]) -> Self {
        ContactState(bits.map(|b| b != 0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitKind {
    FixedTrot,
    FixedPronk,
    VariablePronk,
    Unconstrained,
}

impl GaitKind {
    /// Contact bits an action must carry for this gait.
    pub fn action_bits(self) -> usize {
        match self {
            GaitKind::FixedTrot | GaitKind::FixedPronk => 0,
            GaitKind::VariablePronk => 1,
            GaitKind::Unconstrained => 4,
        }
    }

    pub fn is_fixed(self) -> bool {
        self.action_bits() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaitMode {
    pub kind: GaitKind,
    /// Cycle length in high-level steps.
    pub cycle_steps: usize,
}

impl GaitMode {
    pub fn new(kind: GaitKind, cycle_steps: usize) -> Result<Self, GaitError> {
        if kind.is_fixed() && (cycle_steps < 2 || !cycle_steps.is_multiple_of(2)) {
            return Err(GaitError::InvalidCycle(cycle_steps));
        }
        Ok(Self { kind, cycle_steps })
    }

    pub fn trot(cycle_steps: usize) -> Self {
        Self::new(GaitKind::FixedTrot, cycle_steps).expect("valid trot cycle")
    }

    pub fn pronk(cycle_steps: usize) -> Self {
        Self::new(GaitKind::FixedPronk, cycle_steps).expect("valid pronk cycle")
    }

    /// Cycle frequency in Hz for a step of `dt` seconds.
    pub fn frequency(&self, dt: f64) -> f64 {
        1.0 / (self.cycle_steps as f64 * dt)
    }

    /// Nominal stance (and swing) length in steps: half a cycle.
    pub fn half_cycle(&self) -> usize {
        (self.cycle_steps / 2).max(1)
    }

    /// Contact bits that hold every foot on the ground.
    pub fn standing_bits(&self) -> Vec<bool> {
        vec![true; self.kind.action_bits()]
    }
}

pub fn contact_at(mode: &GaitMode, t: usize, action_bits: Option<&[bool]>) -> Result<ContactState, GaitError> {
    let needed = mode.kind.action_bits();
    let bits = match (needed, action_bits) {
        (0, _) => &[][..],
        (n, Some(b)) if b.len() == n => b,
        (n, b) => {
            return Err(GaitError::MissingContactBits {
                kind: mode.kind,
                expected: n,
                got: b.map_or(0, <[bool]>::len),
            })
        }
    };
    let first_half = t % mode.cycle_steps < mode.cycle_steps / 2;
    Ok(match mode.kind {
        GaitKind::FixedTrot if first_half => ContactState([true, false, false, true]),
        GaitKind::FixedTrot => ContactState([false, true, true, false]),
        GaitKind::FixedPronk if first_half => ContactState::ALL_STANCE,
        GaitKind::FixedPronk => ContactState::FLIGHT,
        GaitKind::VariablePronk => ContactState([bits[0]; 4]),
        GaitKind::Unconstrained => ContactState([bits[0], bits[1], bits[2], bits[3]]),
    })
}

/// Contacts for steps `t .. t + h`. For variable gaits `planned_bits[i]` is
/// used at step `t + i`; steps past the plan hold the last planned bits.
pub fn schedule_window(
    mode: &GaitMode,
    t: usize,
    h: usize,
    planned_bits: Option<&[Vec<bool>]>,
) -> Result<Vec<ContactState>, GaitError> {
    let plan = planned_bits.unwrap_or_default();
    (0..h.max(1))
        .map(|i| {
            let bits = plan.get(i).or(plan.last()).map(Vec::as_slice);
            contact_at(mode, t + i, bits)
        })
        .collect()
}
