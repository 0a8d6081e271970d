//! Closed-form limits on gap crossing for periodic gaits: the longest gap a
//! fixed gait can span and upper bounds on the crossing probability of a
//! randomly placed gap.

use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitGait {
    Trot,
    Pronk,
}

impl LimitGait {
    /// Footfalls per leg pair per cycle that a gap can fall between.
    fn factor(self) -> f64 {
        match self {
            LimitGait::Trot => 2.0,
            LimitGait::Pronk => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LimitGait::Trot => "trot",
            LimitGait::Pronk => "pronk",
        }
    }
}

/// Longest crossable gap, m: `v/f` for a pronk, half that for a trot.
pub fn max_stride(gait: LimitGait, f: f64, v: f64) -> f64 {
    v / (gait.factor() * f)
}

/// Crossing probability bound for a constant-velocity, terrain-blind gait.
pub fn blind_bound(gait: LimitGait, f: f64, v: f64, h: f64) -> f64 {
    (1.0 - gait.factor() * f * h / v).clamp(0.0, 1.0)
}

/// Bound when each foothold may move up to `delta` to avoid the gap.
pub fn fpa_bound(gait: LimitGait, f: f64, v: f64, h: f64, delta: f64) -> f64 {
    blind_bound(gait, f, v, (h - 2.0 * delta).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrideEntry {
    pub gait: LimitGait,
    pub frequency: f64,
    pub velocity: f64,
    pub max_stride: f64,
}

/// Maximum stride for trot and pronk at 3 and 4 Hz and 0.5 and 1.0 m/s.
pub fn stride_table() -> Vec<StrideEntry> {
    let mut rows = Vec::new();
    for gait in [LimitGait::Trot, LimitGait::Pronk] {
        for frequency in [3.0, 4.0] {
            for velocity in [0.5, 1.0] {
                rows.push(StrideEntry { gait, frequency, velocity, max_stride: max_stride(gait, frequency, velocity) });
            }
        }
    }
    rows
}

/// Rounds ties away from zero, as tables are printed by hand.
fn round_half_up(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    // Nudge by a few ulps so values like 6.25 that sit on the tie stay there.
    ((x * s) * (1.0 + 4.0 * f64::EPSILON)).round() / s
}

pub fn write_stride_table<W: Write>(rows: &[StrideEntry], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gait", "frequency_hz", "velocity_mps", "max_stride_cm"])?;
    for r in rows {
        w.write_record([
            r.gait.name().to_string(),
            format!("{}", r.frequency),
            format!("{}", r.velocity),
            format!("{:.1}", round_half_up(r.max_stride * 100.0, 1)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Bound curves on `n + 1` evenly spaced widths from 0 to `h_max`.
pub fn write_bound_curves<W: Write>(
    gait: LimitGait,
    f: f64,
    v: f64,
    delta: f64,
    h_max: f64,
    n: usize,
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gait", "frequency_hz", "velocity_mps", "delta_m", "gap_m", "blind_bound", "fpa_bound"])?;
    for i in 0..=n {
        let h = h_max * i as f64 / n.max(1) as f64;
        w.write_record([
            gait.name().to_string(),
            format!("{f}"),
            format!("{v}"),
            format!("{delta}"),
            format!("{h:.6}"),
            format!("{:.6}", blind_bound(gait, f, v, h)),
            format!("{:.6}", fpa_bound(gait, f, v, h, delta)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
