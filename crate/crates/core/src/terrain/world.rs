use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TerrainError;

/// Narrowest gap the generator produces by default, m.
pub const W_MIN: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    Flat,
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerrainSample {
    Flat { height: f64 },
    Gap,
}

/// Generator settings. Gap widths are drawn uniformly from `[w_min, w_max]`;
/// setting both equal yields fixed-width gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapWorldParams {
    pub w_min: f64,
    pub w_max: f64,
    pub n_gaps: usize,
    pub flat_min: f64,
    pub flat_max: f64,
    /// World start, behind the robot's initial position at x = 0.
    pub origin_x: f64,
    /// Flat distance guaranteed ahead of x = 0 before the randomized lead-in.
    pub run_up: f64,
    pub final_flat: f64,
}

impl Default for GapWorldParams {
    fn default() -> Self {
        Self {
            w_min: W_MIN,
            w_max: 0.30,
            n_gaps: 10,
            flat_min: 0.5,
            flat_max: 2.0,
            origin_x: -1.0,
            run_up: 0.5,
            final_flat: 3.0,
        }
    }
}

/// Terrain made of flat segments separated by bottomless gaps along x.
/// The profile does not vary in y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldFile", into = "WorldFile")]
pub struct GapWorld {
    segments: Vec<Segment>,
    origin_x: f64,
    seed: u64,
    gaps: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    origin_x: f64,
    seed: u64,
    segments: Vec<Segment>,
}

impl TryFrom<WorldFile> for GapWorld {
    type Error = TerrainError;

    fn try_from(f: WorldFile) -> Result<Self, Self::Error> {
        GapWorld::from_segments(f.segments, f.origin_x, f.seed)
    }
}

impl From<GapWorld> for WorldFile {
    fn from(w: GapWorld) -> Self {
        WorldFile {
            origin_x: w.origin_x,
            seed: w.seed,
            segments: w.segments,
        }
    }
}

pub fn generate_gap_world(seed: u64, w_max: f64, n_gaps: usize) -> Result<GapWorld, TerrainError> {
    let params = GapWorldParams {
        w_max,
        n_gaps,
        ..GapWorldParams::default()
    };
    GapWorld::generate(seed, &params)
}

impl GapWorld {
    pub fn generate(seed: u64, params: &GapWorldParams) -> Result<Self, TerrainError> {
        if !(params.w_max >= params.w_min) || params.w_min < 0.0 {
            return Err(TerrainError::InvalidWidth {
                w_min: params.w_min,
                w_max: params.w_max,
            });
        }
        if !(params.flat_max >= params.flat_min && params.flat_min > 0.0) {
            return Err(TerrainError::InvalidLayout("flat width range is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lead = params.run_up - params.origin_x;
        let mut segments = Vec::with_capacity(2 * params.n_gaps + 1);
        if params.n_gaps == 0 {
            segments.push(Segment {
                kind: SegmentKind::Flat,
                width: lead + params.flat_max + params.final_flat,
            });
        } else {
            segments.push(Segment {
                kind: SegmentKind::Flat,
                width: lead + rng.gen_range(params.flat_min..=params.flat_max),
            });
            for i in 0..params.n_gaps {
                segments.push(Segment {
                    kind: SegmentKind::Gap,
                    width: rng.gen_range(params.w_min..=params.w_max),
                });
                let width = if i + 1 == params.n_gaps {
                    params.final_flat
                } else {
                    rng.gen_range(params.flat_min..=params.flat_max)
                };
                segments.push(Segment {
                    kind: SegmentKind::Flat,
                    width,
                });
            }
        }
        Self::from_segments(segments, params.origin_x, seed)
    }

    pub fn from_segments(segments: Vec<Segment>, origin_x: f64, seed: u64) -> Result<Self, TerrainError> {
        if segments.is_empty() || segments.len().is_multiple_of(2) {
            return Err(TerrainError::InvalidLayout(
                "segments must alternate Flat, Gap, ..., Flat".into(),
            ));
        }
        let mut gaps = Vec::with_capacity(segments.len() / 2);
        let mut x = origin_x;
        for (i, seg) in segments.iter().enumerate() {
            let expected = if i % 2 == 0 { SegmentKind::Flat } else { SegmentKind::Gap };
            if seg.kind != expected {
                return Err(TerrainError::InvalidLayout(format!("segment {i} should be {expected:?}")));
            }
            if !(seg.width >= 0.0) {
                return Err(TerrainError::InvalidLayout(format!("segment {i} has negative width")));
            }
            if seg.kind == SegmentKind::Gap {
                gaps.push((x, x + seg.width));
            }
            x += seg.width;
        }
        Ok(Self {
            segments,
            origin_x,
            seed,
            gaps,
        })
    }

    pub fn flat(length: f64) -> Self {
        Self::from_segments(
            vec![Segment {
                kind: SegmentKind::Flat,
                width: length,
            }],
            -1.0,
            0,
        )
        .expect("single flat segment is valid")
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn origin_x(&self) -> f64 {
        self.origin_x
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Open gap intervals `(left, right)` in world x, ordered.
    pub fn gaps(&self) -> &[(f64, f64)] {
        &self.gaps
    }

    pub fn end_x(&self) -> f64 {
        self.origin_x + self.segments.iter().map(|s| s.width).sum::<f64>()
    }

    /// Body x beyond which the episode counts as having reached the end.
    pub fn finish_x(&self) -> f64 {
        match self.gaps.last() {
            Some(&(_, right)) => right + 0.6,
            None => self.end_x() - 1.0,
        }
    }

    /// Flats are closed intervals and gaps open ones, so gap edges are flat.
    /// Terrain outside the generated extent is flat.
    pub fn height_at(&self, x: f64, _y: f64) -> TerrainSample {
        if self.gap_index_at(x).is_some() {
            TerrainSample::Gap
        } else {
            TerrainSample::Flat { height: 0.0 }
        }
    }

    pub fn gap_index_at(&self, x: f64) -> Option<usize> {
        // Gaps are few; a linear scan beats bisection bookkeeping here.
        self.gaps.iter().position(|&(l, r)| x > l && x < r)
    }

    /// True iff `[x - margin, x + margin]` touches no gap interior.
    pub fn is_safe_foothold(&self, x: f64, _y: f64, margin: f64) -> bool {
        let (lo, hi) = (x - margin, x + margin);
        !self.gaps.iter().any(|&(l, r)| hi > l && lo < r)
    }

    /// Signed distance to the nearest gap edge: positive on flat ground,
    /// negative inside a gap. Infinite when the world has no gaps.
    pub fn safety_margin(&self, x: f64) -> f64 {
        let mut best = f64::INFINITY;
        for &(l, r) in &self.gaps {
            if x > l && x < r {
                return -(x - l).min(r - x);
            }
            best = best.min((x - l).abs()).min((x - r).abs());
        }
        best
    }

    /// Ray from `origin` along unit `dir`. Returns the hit distance and whether
    /// the ray entered a gap, or `None` when the ray never reaches the ground.
    pub fn raycast(&self, origin: &nalgebra::Vector3<f64>, dir: &nalgebra::Vector3<f64>) -> Option<(f64, bool)> {
        if !(dir.z < 0.0) || origin.z < 0.0 {
            return None;
        }
        let t = -origin.z / dir.z;
        let x = origin.x + t * dir.x;
        Some((t, self.gap_index_at(x).is_some()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("world serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self, TerrainError> {
        toml::from_str(s).map_err(|e| TerrainError::InvalidLayout(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_world() -> GapWorld {
        GapWorld::from_segments(
            vec![
                Segment { kind: SegmentKind::Flat, width: 2.0 },
                Segment { kind: SegmentKind::Gap, width: 0.1 },
                Segment { kind: SegmentKind::Flat, width: 1.0 },
            ],
            -1.0,
            0,
        )
        .unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_gap_world(0, 0.30, 10).unwrap();
        let b = generate_gap_world(0, 0.30, 10).unwrap();
        assert_eq!(a.segments(), b.segments());
        assert_ne!(a.segments(), generate_gap_world(1, 0.30, 10).unwrap().segments());
    }

    #[test]
    fn zero_gaps_is_one_flat() {
        let w = generate_gap_world(3, 0.2, 0).unwrap();
        assert_eq!(w.segments().len(), 1);
        assert_eq!(w.segments()[0].kind, SegmentKind::Flat);
        assert!(w.gaps().is_empty());
    }

    #[test]
    fn narrow_w_max_is_rejected() {
        assert!(matches!(generate_gap_world(0, 0.03, 2), Err(TerrainError::InvalidWidth { .. })));
    }

    #[test]
    fn gap_width_distribution_matches_uniform_law() {
        let w_max = 0.30;
        let mut widths = Vec::new();
        let mut seed = 0;
        while widths.len() < 10_000 {
            let w = generate_gap_world(seed, w_max, 50).unwrap();
            widths.extend(w.segments().iter().filter(|s| s.kind == SegmentKind::Gap).map(|s| s.width));
            seed += 1;
        }
        widths.truncate(10_000);
        let n = widths.len() as f64;
        let mean = widths.iter().sum::<f64>() / n;
        let min = widths.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = widths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sigma = (w_max - W_MIN) / 12f64.sqrt() / n.sqrt();
        assert!(min >= W_MIN && max <= w_max);
        assert!((mean - (W_MIN + w_max) / 2.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn height_queries_follow_boundary_convention() {
        let w = sample_world();
        let (l, r) = w.gaps()[0];
        assert_eq!(l, 1.0);
        assert_eq!(w.height_at(0.0, 0.0), TerrainSample::Flat { height: 0.0 });
        assert_eq!(w.height_at(l, 0.0), TerrainSample::Flat { height: 0.0 });
        assert_eq!(w.height_at(r, 0.3), TerrainSample::Flat { height: 0.0 });
        assert_eq!(w.height_at(1.05, -0.2), TerrainSample::Gap);
        assert_eq!(w.height_at(50.0, 0.0), TerrainSample::Flat { height: 0.0 });
    }

    #[test]
    fn foothold_safety() {
        let w = sample_world();
        let (l, r) = w.gaps()[0];
        assert!(w.is_safe_foothold(0.5, 0.0, 0.0));
        assert!(!w.is_safe_foothold((l + r) / 2.0, 0.0, 0.0));
        assert!(!w.is_safe_foothold(r + 0.009, 0.0, 0.01));
        assert!(w.is_safe_foothold(r + 0.011, 0.0, 0.01));
        assert!(w.is_safe_foothold(l, 0.0, 0.0));
    }

    #[test]
    fn safety_margin_sign() {
        let w = sample_world();
        assert!((w.safety_margin(0.9) - 0.1).abs() < 1e-12);
        assert!((w.safety_margin(1.03) + 0.03).abs() < 1e-12);
        assert!(GapWorld::flat(5.0).safety_margin(0.0).is_infinite());
    }

    #[test]
    fn toml_round_trip() {
        let w = generate_gap_world(11, 0.2, 4).unwrap();
        let back = GapWorld::from_toml(&w.to_toml()).unwrap();
        assert_eq!(w, back);
        let bad = "origin_x = 0.0\nseed = 0\n[[segments]]\nkind = \"Gap\"\nwidth = 0.1\n";
        assert!(GapWorld::from_toml(bad).is_err());
    }

    proptest! {
        #[test]
        fn generated_worlds_respect_invariants(seed in any::<u64>(), w_max in 0.04f64..0.7, n in 0usize..12) {
            let w = generate_gap_world(seed, w_max, n).unwrap();
            let segs = w.segments();
            prop_assert_eq!(segs.len(), 2 * n + 1);
            for (i, s) in segs.iter().enumerate() {
                let expected = if i % 2 == 0 { SegmentKind::Flat } else { SegmentKind::Gap };
                prop_assert_eq!(s.kind, expected);
                match s.kind {
                    SegmentKind::Gap => prop_assert!(s.width >= W_MIN && s.width <= w_max),
                    SegmentKind::Flat if i > 0 && i + 1 < segs.len() => {
                        prop_assert!(s.width >= 0.5 && s.width <= 2.0)
                    }
                    SegmentKind::Flat => {}
                }
            }
        }
    }
}
