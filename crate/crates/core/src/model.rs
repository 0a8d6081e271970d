//! Robot parameters and 3-DoF leg kinematics.
//!
//! Each leg is an abduction joint (about body x) followed by hip and knee
//! pitch joints (about body y). Foot positions are expressed in the hip
//! frame: origin at the abduction axis, axes parallel to the body frame.
//! At `q = 0` the leg hangs straight down, offset laterally by the
//! abduction link.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("foot target {0:?} is outside the leg workspace")]
    Unreachable([f64; 3]),
    #[error("invalid robot model: {0}")]
    Invalid(String),
    #[error("failed to read robot config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse robot config: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Feet in the fixed order used by every contact and foot vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LegId {
    LF = 0,
    RF = 1,
    LR = 2,
    RR = 3,
}

impl LegId {
    pub const ALL: [LegId; 4] = [LegId::LF, LegId::RF, LegId::LR, LegId::RR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> LegId {
        Self::ALL[i]
    }

    /// +1 for left legs, -1 for right legs.
    pub fn side_sign(self) -> f64 {
        match self {
            LegId::LF | LegId::LR => 1.0,
            LegId::RF | LegId::RR => -1.0,
        }
    }

    pub fn is_front(self) -> bool {
        matches!(self, LegId::LF | LegId::RF)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLengths {
    pub abduction: f64,
    pub upper: f64,
    pub lower: f64,
}

impl Default for LinkLengths {
    fn default() -> Self {
        Self {
            abduction: 0.062,
            upper: 0.209,
            lower: 0.195,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegJointState {
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotModel {
    pub mass: f64,
    /// Diagonal of the body inertia, kg·m².
    pub body_inertia: [f64; 3],
    pub body_length: f64,
    pub body_width: f64,
    pub standing_height: f64,
    /// Abduction joint locations in the body frame, ordered LF, RF, LR, RR.
    pub hip_offsets: [[f64; 3]; 4],
    pub link_lengths: LinkLengths,
    pub friction_coefficient: f64,
    pub max_normal_force: f64,
    /// Knee joint range (min, max), rad.
    pub knee_range: (f64, f64),
}

impl Default for RobotModel {
    fn default() -> Self {
        let hx = 0.19;
        let hy = 0.049;
        Self {
            mass: 9.0,
            body_inertia: [0.07, 0.26, 0.242],
            body_length: 0.38,
            body_width: 0.22,
            standing_height: 0.28,
            hip_offsets: [[hx, hy, 0.0], [hx, -hy, 0.0], [-hx, hy, 0.0], [-hx, -hy, 0.0]],
            link_lengths: LinkLengths::default(),
            friction_coefficient: 0.4,
            max_normal_force: 120.0,
            knee_range: (-2.6, -0.3),
        }
    }
}

impl RobotModel {
    pub fn from_toml_str(s: &str) -> Result<Self, ModelError> {
        let model: RobotModel = toml::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Invalid(m.to_string()));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if self.body_inertia.iter().any(|&i| !(i > 0.0)) {
            return bad("inertia diagonal must be positive");
        }
        let l = &self.link_lengths;
        if !(l.abduction > 0.0 && l.upper > 0.0 && l.lower > 0.0) {
            return bad("link lengths must be positive");
        }
        if !(self.friction_coefficient > 0.0) || !(self.max_normal_force > 0.0) {
            return bad("friction coefficient and max normal force must be positive");
        }
        // Mirroring across the x and y axes must map the hip set to itself.
        for o in &self.hip_offsets {
            for (sx, sy) in [(1.0, -1.0), (-1.0, 1.0)] {
                let m = [o[0] * sx, o[1] * sy, o[2]];
                let found = self.hip_offsets.iter().any(|p| {
                    (p[0] - m[0]).abs() < 1e-12 && (p[1] - m[1]).abs() < 1e-12 && (p[2] - m[2]).abs() < 1e-12
                });
                if !found {
                    return bad("hip offsets are not mirror symmetric");
                }
            }
        }
        Ok(())
    }

    pub fn hip_offset(&self, leg: LegId) -> Vector3<f64> {
        Vector3::from(self.hip_offsets[leg.index()])
    }

    pub fn inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.body_inertia))
    }

    /// Maximum hip-to-foot distance in the sagittal plane.
    pub fn leg_reach(&self) -> f64 {
        self.link_lengths.upper + self.link_lengths.lower
    }

    /// Foot position in the body frame when standing at nominal height.
    pub fn nominal_foot(&self, leg: LegId) -> Vector3<f64> {
        self.hip_offset(leg)
            + Vector3::new(0.0, leg.side_sign() * self.link_lengths.abduction, -self.standing_height)
    }

    pub fn forward_kinematics(&self, leg: LegId, q: &Vector3<f64>) -> Vector3<f64> {
        let l = &self.link_lengths;
        let (s0, c0) = q[0].sin_cos();
        let (s1, c1) = q[1].sin_cos();
        let (s12, c12) = (q[1] + q[2]).sin_cos();
        let x = -l.upper * s1 - l.lower * s12;
        let zs = -l.upper * c1 - l.lower * c12;
        let ys = leg.side_sign() * l.abduction;
        Vector3::new(x, c0 * ys - s0 * zs, s0 * ys + c0 * zs)
    }

    /// Analytic inverse kinematics, knee-backward branch (knee angle <= 0).
    pub fn inverse_kinematics(&self, leg: LegId, p: &Vector3<f64>) -> Result<Vector3<f64>, ModelError> {
        let l = &self.link_lengths;
        let unreachable = || ModelError::Unreachable([p.x, p.y, p.z]);
        let ys = leg.side_sign() * l.abduction;

        let yz_sq = p.y * p.y + p.z * p.z;
        let sag_sq = yz_sq - l.abduction * l.abduction;
        if sag_sq < 0.0 {
            return Err(unreachable());
        }
        let zs = -sag_sq.sqrt();
        let q0 = wrap_angle(p.z.atan2(p.y) - zs.atan2(ys));

        let r_sq = p.x * p.x + zs * zs;
        let cos_knee = (r_sq - l.upper * l.upper - l.lower * l.lower) / (2.0 * l.upper * l.lower);
        const SLACK: f64 = 1e-12;
        if !(-1.0 - SLACK..=1.0 + SLACK).contains(&cos_knee) {
            return Err(unreachable());
        }
        let q2 = -cos_knee.clamp(-1.0, 1.0).acos();
        let q1 = (-p.x).atan2(-zs) - (l.lower * q2.sin()).atan2(l.upper + l.lower * q2.cos());
        Ok(Vector3::new(q0, wrap_angle(q1), q2))
    }

    /// Foot Jacobian in the hip frame: foot velocity = J · qd.
    pub fn foot_jacobian(&self, leg: LegId, q: &Vector3<f64>) -> Matrix3<f64> {
        let l = &self.link_lengths;
        let (s0, c0) = q[0].sin_cos();
        let (s1, c1) = q[1].sin_cos();
        let (s12, c12) = (q[1] + q[2]).sin_cos();
        let x = -l.upper * s1 - l.lower * s12;
        let zs = -l.upper * c1 - l.lower * c12;
        let ys = leg.side_sign() * l.abduction;
        let y = c0 * ys - s0 * zs;
        let z = s0 * ys + c0 * zs;

        // Sagittal partials.
        let dx1 = zs;
        let dx2 = -l.lower * c12;
        let dzs1 = -x;
        let dzs2 = l.lower * s12;

        Matrix3::new(
            0.0, dx1, dx2, //
            -z, -s0 * dzs1, -s0 * dzs2, //
            y, c0 * dzs1, c0 * dzs2,
        )
    }

    pub fn knee_in_range(&self, q: &Vector3<f64>) -> bool {
        q[2] > self.knee_range.0 && q[2] < self.knee_range.1
    }
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = a % two_pi;
    if a > std::f64::consts::PI {
        a -= two_pi;
    } else if a <= -std::f64::consts::PI {
        a += two_pi;
    }
    a
}
