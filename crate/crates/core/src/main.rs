use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::Vector3;

use gapcross::gait::GaitKind;
use gapcross::harness::{
    compare_to_bounds, evaluate, write_bound_report, write_evaluation, BoundKind, Config, HarnessError,
};
use gapcross::limits::{stride_table, write_bound_curves, write_stride_table, LimitGait};
use gapcross::policies::PolicyKind;
use gapcross::sim::rollout;
use gapcross::terrain::{
    preprocess_depth, render_depth, write_pgm16, CameraIntrinsics, CameraPose, GapWorld, GapWorldParams,
};

#[derive(Parser)]
#[command(name = "gapcross", about = "Quadruped gap-crossing simulation and evaluation")]
struct Cli {
    /// TOML config file; GAPCROSS_* environment variables override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a gap world from the terrain settings and write it as TOML.
    GenTerrain {
        #[arg(long)]
        w_max: Option<f64>,
        #[arg(long)]
        n_gaps: Option<usize>,
    },
    /// Run one episode and write its full log.
    Rollout {
        /// World file from `gen-terrain`; generated from the seed otherwise.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Also write per-solve force-planner diagnostics.
        #[arg(long)]
        mpc_diagnostics: bool,
    },
    /// Batch evaluation over the configured gap widths.
    Evaluate,
    /// Print the stride table, or bound curves with `--curves`.
    Limits {
        #[arg(long)]
        curves: bool,
        #[arg(long, default_value_t = 3.0)]
        frequency: f64,
        #[arg(long, default_value_t = 1.0)]
        velocity: f64,
        #[arg(long, default_value_t = 0.04)]
        delta: f64,
        #[arg(long, default_value_t = 0.4)]
        gap_max: f64,
        #[arg(long, default_value_t = 40)]
        points: usize,
    },
    /// Render a depth frame over flat ground in front of a gap world.
    RenderDepth {
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, default_value_t = 0.3)]
        height: f64,
        /// Camera pitch below the horizon, degrees.
        #[arg(long, default_value_t = 30.0)]
        pitch_deg: f64,
    },
}

fn load_config(cli: &Cli) -> Result<Config, HarnessError> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(cfg: &Config, name: &str) -> Result<BufWriter<File>, HarnessError> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(BufWriter::new(File::create(cfg.out.join(name))?))
}

fn load_world(cfg: &Config, path: Option<&PathBuf>, params: &GapWorldParams) -> Result<GapWorld, HarnessError> {
    Ok(match path {
        Some(p) => GapWorld::from_toml(&std::fs::read_to_string(p)?)?,
        None => GapWorld::generate(cfg.seed, params)?,
    })
}

fn policy_speed(kind: &PolicyKind) -> Option<f64> {
    match kind {
        PolicyKind::Blind { v_cmd } | PolicyKind::Fpa { v_cmd, .. } => Some(*v_cmd),
        _ => None,
    }
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::GenTerrain { w_max, n_gaps } => {
            let mut params = cfg.terrain.clone();
            if let Some(w) = w_max {
                params.w_max = *w;
            }
            if let Some(n) = n_gaps {
                params.n_gaps = *n;
            }
            let world = GapWorld::generate(cfg.seed, &params)?;
            create(&cfg, "world.toml")?.write_all(world.to_toml().as_bytes())?;
        }
        Command::Rollout { world, mpc_diagnostics } => {
            let world = load_world(&cfg, world.as_ref(), &cfg.terrain)?;
            let mut rcfg = cfg.rollout.clone();
            rcfg.gait = cfg.policy.gait(rcfg.gait);
            rcfg.record = true;
            rcfg.mpc.solver.record_history = *mpc_diagnostics;
            let mut policy = cfg.policy.build(&rcfg.gait, rcfg.wtg.dt)?;
            let res = rollout(policy.as_mut(), &world, &rcfg)?;
            res.write_log(create(&cfg, "rollout_log.csv")?)?;
            if *mpc_diagnostics {
                let mut w = csv::Writer::from_writer(create(&cfg, "mpc_diagnostics.csv")?);
                w.write_record(["step", "iteration", "residual", "objective"])?;
                for (step, stats) in res.mpc_stats.iter().enumerate() {
                    for h in &stats.history {
                        w.serialize((step, h.iteration, h.residual, h.objective))?;
                    }
                }
                w.flush()?;
            }
            let mut summary = res.clone();
            summary.log.clear();
            summary.mpc_stats.clear();
            let mut out = create(&cfg, "summary.jsonl")?;
            serde_json::to_writer(&mut out, &summary)?;
            out.write_all(b"\n")?;
            println!("{:?} after {} steps, x = {:.3} m", res.status, res.steps, res.final_position.x);
        }
        Command::Evaluate => {
            let ev = evaluate(&cfg)?;
            write_evaluation(&ev, &cfg.out)?;
            let gait = cfg.policy.gait(cfg.rollout.gait);
            let limit_gait = match gait.kind {
                GaitKind::FixedTrot => Some(LimitGait::Trot),
                GaitKind::FixedPronk => Some(LimitGait::Pronk),
                _ => None,
            };
            let bound = match &cfg.policy {
                PolicyKind::Blind { .. } => Some(BoundKind::Blind),
                PolicyKind::Fpa { delta_max, .. } => Some(BoundKind::Fpa { delta: *delta_max }),
                _ => None,
            };
            if let (Some(lg), Some(kind), Some(v)) = (limit_gait, bound, policy_speed(&cfg.policy)) {
                let checks = compare_to_bounds(&ev.curve, lg, gait.frequency(cfg.rollout.wtg.dt), v, kind);
                write_bound_report(&checks, create(&cfg, "bounds.csv")?)?;
            }
            ev.curve.write_csv(std::io::stdout().lock())?;
        }
        Command::Limits { curves, frequency, velocity, delta, gap_max, points } => {
            let stdout = std::io::stdout();
            if *curves {
                for gait in [LimitGait::Trot, LimitGait::Pronk] {
                    write_bound_curves(gait, *frequency, *velocity, *delta, *gap_max, *points, stdout.lock())?;
                }
            } else {
                write_stride_table(&stride_table(), stdout.lock())?;
            }
        }
        Command::RenderDepth { world, x, height, pitch_deg } => {
            let world = load_world(&cfg, world.as_ref(), &cfg.terrain)?;
            let pose = CameraPose::looking_forward(Vector3::new(*x, 0.0, *height), pitch_deg.to_radians());
            let raw = render_depth(&world, &pose, &CameraIntrinsics::default());
            write_pgm16(&raw, create(&cfg, "depth_raw.pgm")?)?;
            write_pgm16(&preprocess_depth(&raw)?, create(&cfg, "depth.pgm")?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
