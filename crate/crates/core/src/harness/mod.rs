//! Configuration, batch evaluation and success curves.

mod config;

use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::limits::{blind_bound, fpa_bound, LimitGait};
use crate::policies::PolicyError;
use crate::sim::{rollout, EpisodeStatus, SimError};
use crate::terrain::{GapWorld, TerrainError};

pub use config::{Config, EvalParams, ENV_PREFIX};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Seed of the world for one episode. Each (cell, episode) pair reads its own
/// stream of the generator keyed by the run seed, so streams never overlap.
pub fn episode_seed(seed: u64, cell: usize, episode: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | episode as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub cell: usize,
    pub width: f64,
    pub episode: usize,
    pub world_seed: u64,
    pub status: EpisodeStatus,
    pub steps: usize,
    pub total_reward: f64,
    pub final_x: f64,
    pub attempts: usize,
    pub crossings: usize,
    pub fallbacks: usize,
    pub mpc_unconverged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub width: f64,
    pub attempts: usize,
    pub crossings: usize,
}

impl CurveRow {
    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.crossings as f64 / self.attempts as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.attempts == 0 {
            return 0.0;
        }
        let p = self.rate();
        (p * (1.0 - p) / self.attempts as f64).sqrt()
    }
}

/// Crossing statistics per gap width, sorted by width.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub rows: Vec<CurveRow>,
}

impl SuccessCurve {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let mut curve = SuccessCurve::default();
        for r in records {
            curve.add(CurveRow { width: r.width, attempts: r.attempts, crossings: r.crossings });
        }
        curve
    }

    fn add(&mut self, row: CurveRow) {
        match self.rows.binary_search_by(|r| r.width.total_cmp(&row.width)) {
            Ok(i) => {
                self.rows[i].attempts += row.attempts;
                self.rows[i].crossings += row.crossings;
            }
            Err(i) => self.rows.insert(i, row),
        }
    }

    /// Pools two curves width by width.
    pub fn merge(&self, other: &SuccessCurve) -> SuccessCurve {
        let mut out = self.clone();
        for &row in &other.rows {
            out.add(row);
        }
        out
    }

    pub fn row(&self, width: f64) -> Option<&CurveRow> {
        self.rows.iter().find(|r| (r.width - width).abs() < 1e-12)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["gap_m", "attempts", "crossings", "success_rate", "stderr"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:.4}", r.width),
                r.attempts.to_string(),
                r.crossings.to_string(),
                format!("{:.6}", r.rate()),
                format!("{:.6}", r.stderr()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundKind {
    Blind,
    Fpa { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub width: f64,
    pub rate: f64,
    pub stderr: f64,
    pub bound: f64,
    /// Empirical rate within three standard errors of the bound or below it.
    pub within: bool,
}

pub fn compare_to_bounds(curve: &SuccessCurve, gait: LimitGait, f: f64, v: f64, kind: BoundKind) -> Vec<BoundCheck> {
    curve
        .rows
        .iter()
        .map(|r| {
            let bound = match kind {
                BoundKind::Blind => blind_bound(gait, f, v, r.width),
                BoundKind::Fpa { delta } => fpa_bound(gait, f, v, r.width, delta),
            };
            BoundCheck {
                width: r.width,
                rate: r.rate(),
                stderr: r.stderr(),
                bound,
                within: r.rate() <= bound + 3.0 * r.stderr() + 1e-12,
            }
        })
        .collect()
}

pub fn write_bound_report<W: Write>(checks: &[BoundCheck], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gap_m", "success_rate", "stderr", "bound", "within_bound"])?;
    for c in checks {
        w.write_record([
            format!("{:.4}", c.width),
            format!("{:.6}", c.rate),
            format!("{:.6}", c.stderr),
            format!("{:.6}", c.bound),
            c.within.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one episode of the configured policy on the world for `(cell, episode)`.
pub fn run_episode(cfg: &Config, cell: usize, episode: usize) -> Result<EpisodeRecord, HarnessError> {
    let width = cfg.eval.widths[cell];
    let world_seed = episode_seed(cfg.seed, cell, episode);
    let world = GapWorld::generate(world_seed, &cfg.eval.world_params(width))?;
    let mut rcfg = cfg.rollout.clone();
    rcfg.gait = cfg.policy.gait(rcfg.gait);
    rcfg.record = false;
    let mut policy = cfg.policy.build(&rcfg.gait, rcfg.wtg.dt)?;
    let res = rollout(policy.as_mut(), &world, &rcfg)?;
    Ok(EpisodeRecord {
        cell,
        width,
        episode,
        world_seed,
        status: res.status,
        steps: res.steps,
        total_reward: res.total_reward,
        final_x: res.final_position.x,
        attempts: res.gaps.iter().filter(|g| g.attempted).count(),
        crossings: res.gaps.iter().filter(|g| g.attempted && g.crossed).count(),
        fallbacks: res.fallbacks,
        mpc_unconverged: res.mpc_unconverged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub curve: SuccessCurve,
    pub records: Vec<EpisodeRecord>,
}

/// Every (width, episode) pair of the config, run on `cfg.workers` threads.
/// Records come back in job order whatever the thread count.
pub fn evaluate(cfg: &Config) -> Result<Evaluation, HarnessError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.eval.widths.len()).flat_map(|c| (0..cfg.eval.episodes).map(move |e| (c, e))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let records = pool.install(|| {
        jobs.par_iter().map(|&(c, e)| run_episode(cfg, c, e)).collect::<Result<Vec<_>, _>>()
    })?;
    Ok(Evaluation { curve: SuccessCurve::from_records(&records), records })
}

pub fn write_records<W: Write>(records: &[EpisodeRecord], mut out: W) -> Result<(), HarnessError> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes `curve.csv` and `episodes.jsonl` under `dir`.
pub fn write_evaluation(eval: &Evaluation, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    eval.curve.write_csv(std::fs::File::create(dir.join("curve.csv"))?)?;
    write_records(&eval.records, std::io::BufWriter::new(std::fs::File::create(dir.join("episodes.jsonl"))?))?;
    Ok(())
}
