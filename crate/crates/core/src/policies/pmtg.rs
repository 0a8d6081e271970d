//! Cyclic foot trajectory generator and a policy that follows its contact timing.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use super::{Observation, Policy, PolicyError};
use crate::wtg::Action;

/// Swing apex height above the stance line, m.
pub const PMTG_HEIGHT: f64 = 0.17;
/// Fore-aft half amplitude, m.
pub const PMTG_DEPTH: f64 = 0.08;
/// Stance line below the hip, m.
pub const PMTG_OFFSET: f64 = -0.28;

/// Hip-frame foot position for one leg phase.
pub fn pmtg_foot(phase: f64) -> Vector3<f64> {
    let phi = phase.rem_euclid(TAU);
    let k = 2.0 * (phi - PI) / PI;
    let z = if (0.0..=1.0).contains(&k) {
        PMTG_HEIGHT * (-2.0 * k.powi(3) + 3.0 * k * k) + PMTG_OFFSET
    } else if k > 1.0 && k <= 2.0 {
        PMTG_HEIGHT * (2.0 * k.powi(3) - 9.0 * k * k + 12.0 * k - 4.0) + PMTG_OFFSET
    } else {
        PMTG_OFFSET
    };
    Vector3::new(PMTG_DEPTH * phi.cos(), 0.0, z)
}

pub fn pmtg_tg(phases: &[f64; 4]) -> [Vector3<f64>; 4] {
    phases.map(pmtg_foot)
}

/// Advances the four leg phases at a fixed frequency and commands stance
/// while a leg is on the flat part of its cycle.
#[derive(Debug, Clone)]
pub struct PmtgPolicy {
    frequency: f64,
    dt: f64,
    phases: [f64; 4],
}

impl PmtgPolicy {
    pub const INITIAL_PHASES: [f64; 4] = [0.0, PI, 0.0, PI];

    pub fn new(frequency: f64, dt: f64) -> Self {
        Self { frequency, dt, phases: Self::INITIAL_PHASES }
    }

    pub fn phases(&self) -> [f64; 4] {
        self.phases
    }

    /// Body speed that keeps the stance sweep of `2 * depth` per half cycle.
    pub fn body_speed(&self) -> f64 {
        4.0 * PMTG_DEPTH * self.frequency
    }
}

impl Policy for PmtgPolicy {
    fn act(&mut self, _obs: &Observation) -> Result<Action, PolicyError> {
        let bits = self.phases.map(|p| p.rem_euclid(TAU) < PI).to_vec();
        let action = Action {
            v_cmd: Vector3::new(self.body_speed(), 0.0, 0.0),
            yaw_rate: 0.0,
            contact_bits: bits,
        };
        for p in &mut self.phases {
            *p = (*p + TAU * self.frequency * self.dt).rem_euclid(TAU);
        }
        Ok(action)
    }

    fn reset(&mut self) {
        self.phases = Self::INITIAL_PHASES;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{GaitKind, GaitMode};

    #[test]
    fn evaluation_points() {
        assert_eq!(pmtg_foot(PI), Vector3::new(-0.08, 0.0, -0.28));
        let p = pmtg_foot(1.5 * PI);
        assert!(p.x.abs() < 1e-16 && (p.z - -0.11).abs() < 1e-15);
        assert_eq!(pmtg_foot(0.0), Vector3::new(0.08, 0.0, -0.28));
    }

    #[test]
    fn policy_alternates_diagonal_pairs() {
        let mode = GaitMode::new(GaitKind::Unconstrained, 10).unwrap();
        let obs = super::super::test_observation(&mode);
        let mut p = PmtgPolicy::new(2.0, 0.036);
        let a = p.act(&obs).unwrap();
        assert_eq!(a.contact_bits, vec![true, false, true, false]);
        assert!((a.v_cmd.x - 0.64).abs() < 1e-12);
        let mut saw_swap = false;
        for _ in 0..20 {
            let b = p.act(&obs).unwrap();
            if b.contact_bits == vec![false, true, false, true] {
                saw_swap = true;
            }
        }
        assert!(saw_swap);
    }
}
