//! Command-line front end: grasp estimation, model fitting, simulated
//! opening, prior-store management, and batch convergence experiments.
//!
//! Every command is deterministic given its inputs and seed; experiment
//! output is independent of the worker-thread count. Exit codes: 0 success,
//! 1 I/O or parse failure, 2 domain shortfall (no handles, too few
//! observations).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use doorkin::config::RunConfig;
use doorkin::doorsim::{run_opening, DoorSpec, OpeningConfig};
use doorkin::experiment::{convergence_csv, run_fig13a, run_fig13b};
use doorkin::grasp::{estimate_grasp_poses, grasp_report, GraspConfig};
use doorkin::kinfit::{KinematicModel, MlesacConfig, Trajectory};
use doorkin::modelsel::{select_model, ModelselError};
use doorkin::priors::{select_with_priors, PriorStore, Provenance, StoredTrajectory};

/// Nominal workspace volume for the uniform outlier component when the
/// caller supplies no scene bounds; the trajectory's own bounding box is
/// degenerate for clean data.
const DEFAULT_OUTLIER_VOLUME: f64 = 1.0;

#[derive(Parser)]
#[command(name = "doorkin", about = "Door perception and kinematic inference toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate handle grasp poses from an organized cloud and detections.
    Grasp {
        #[arg(long)]
        cloud: Option<PathBuf>,
        #[arg(long)]
        boxes: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit kinematic model candidates to a trajectory and report posteriors.
    Fit {
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the simulated opening loop against a door spec.
    Open {
        #[arg(long)]
        door: PathBuf,
        /// Destination for the per-iteration CSV log.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        use_priors: bool,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Inspect or update the prior trajectory store.
    Priors {
        #[command(subcommand)]
        action: PriorsAction,
    },
    /// Batch convergence experiments; emits aggregate CSVs.
    Experiment {
        /// Study name: fig13a or fig13b.
        #[arg(long)]
        name: String,
        #[arg(long)]
        seeds: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Base seed; mandatory so batch runs are always reproducible.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PriorsAction {
    /// Print every stored entry.
    List {
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Ingest a trajectory as a human demonstration.
    Add {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 0)]
        timestamp: u64,
    },
    /// Run prior-aware selection on a trajectory and persist the result.
    Run {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 0)]
        timestamp: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, String> {
    match path {
        Some(p) => RunConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(RunConfig::default()),
    }
}

fn store_path(flag: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("DOORKIN_STORE").map(PathBuf::from))
        .or_else(|| cfg.store.clone())
        .unwrap_or_else(|| PathBuf::from("prior_store"))
}

fn load_store_or_empty(dir: &Path) -> Result<PriorStore, String> {
    if dir.join("store.manifest").exists() {
        PriorStore::load(dir).map_err(|e| e.to_string())
    } else {
        Ok(PriorStore::new())
    }
}

fn cmd_grasp(
    cloud: &Option<PathBuf>,
    boxes: &Option<PathBuf>,
    config: &Option<PathBuf>,
    seed: Option<u64>,
) -> Result<u8, String> {
    let cfg = load_config(config)?;
    let cloud_path = cloud
        .clone()
        .or_else(|| cfg.cloud.clone())
        .ok_or("no cloud path given (flag --cloud or config key)")?;
    let boxes_path = boxes
        .clone()
        .or_else(|| cfg.boxes.clone())
        .ok_or("no boxes path given (flag --boxes or config key)")?;
    let cloud = doorkin::cloud::PointCloud::load(&cloud_path).map_err(|e| e.to_string())?;
    let boxes = doorkin::cloud::load_boxes(&boxes_path).map_err(|e| e.to_string())?;
    if !boxes.iter().any(|b| b.class == doorkin::cloud::ObjectClass::Handle) {
        eprintln!("no handle detections in {}", boxes_path.display());
        return Ok(2);
    }
    let gcfg = GraspConfig {
        plane_threshold: cfg.plane_threshold,
        seed: seed.unwrap_or(cfg.seed),
        ..Default::default()
    };
    let (grasps, _, failures) = estimate_grasp_poses(&cloud, &boxes, &gcfg);
    print!("{}", grasp_report(&grasps));
    for f in &failures {
        eprintln!("handle {}: {}", f.handle_index, f.error);
    }
    Ok(if grasps.is_empty() { 2 } else { 0 })
}

fn cmd_fit(
    traj: &Option<PathBuf>,
    config: &Option<PathBuf>,
    seed: Option<u64>,
) -> Result<u8, String> {
    let cfg = load_config(config)?;
    let traj_path = traj
        .clone()
        .or_else(|| cfg.trajectory.clone())
        .ok_or("no trajectory path given (flag --traj or config key)")?;
    let traj = Trajectory::load(&traj_path).map_err(|e| e.to_string())?;
    let mut mcfg = cfg.mlesac(Some(DEFAULT_OUTLIER_VOLUME));
    if let Some(s) = seed {
        mcfg.seed = s;
    }
    match select_model(&traj, &mcfg) {
        Ok(outcome) => {
            print!("{}", outcome.posterior.report());
            println!("{}", outcome.winning_fit().model.describe());
            Ok(0)
        }
        Err(ModelselError::TooFewObservations(n)) => {
            eprintln!("trajectory has {n} observations, need at least 3");
            Ok(2)
        }
        Err(e) => Err(e.to_string()),
    }
}

fn model_error_report(truth: &KinematicModel, estimate: &KinematicModel) -> String {
    match (truth, estimate) {
        (KinematicModel::Prismatic(t), KinematicModel::Prismatic(e)) => {
            let angle = t.direction.dot(&e.direction).abs().clamp(-1.0, 1.0).acos();
            format!("direction_error_deg {:.4}", angle.to_degrees())
        }
        (KinematicModel::Revolute(t), KinematicModel::Revolute(e)) => {
            let angle = t.normal.dot(&e.normal).abs().clamp(-1.0, 1.0).acos();
            format!(
                "center_error_m {:.4}\nradius_error_m {:.4}\nnormal_error_deg {:.4}",
                (t.center - e.center).norm(),
                (t.radius - e.radius).abs(),
                angle.to_degrees()
            )
        }
        _ => "model_mismatch".into(),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_open(
    door: &Path,
    out: &Path,
    use_priors: bool,
    store: &Option<PathBuf>,
    config: &Option<PathBuf>,
    seed: Option<u64>,
    iters: Option<usize>,
    step: Option<f64>,
) -> Result<u8, String> {
    let cfg = load_config(config)?;
    let spec = DoorSpec::load(door).map_err(|e| e.to_string())?;
    let ocfg = OpeningConfig {
        step: step.unwrap_or(cfg.step),
        iters: iters.unwrap_or(cfg.iters),
        seed: seed.unwrap_or(cfg.seed),
        use_priors,
        sigma: cfg.mlesac_sigma,
        hypotheses: cfg.hypotheses,
        em_steps: cfg.em_steps,
    };
    let loaded_store;
    let store_ref = if use_priors {
        loaded_store = load_store_or_empty(&store_path(store, &cfg))?;
        Some(&loaded_store)
    } else {
        None
    };
    let log = run_opening(&spec, &ocfg, store_ref).map_err(|e| e.to_string())?;
    std::fs::write(out, log.to_csv())
        .map_err(|e| format!("io error on {}: {e}", out.display()))?;
    if log.limit_reached {
        println!("limit_reached after {} iterations", log.records.len());
    }
    match log.final_winner() {
        Some(winner) => println!("winner {winner}"),
        None => println!("winner none"),
    }
    if let Some(estimate) = &log.final_estimate {
        println!("{}", model_error_report(&spec.true_model, estimate));
    }
    Ok(0)
}

fn cmd_priors(action: &PriorsAction) -> Result<u8, String> {
    match action {
        PriorsAction::List { store } => {
            let cfg = RunConfig::default();
            let dir = store_path(store, &cfg);
            let store = load_store_or_empty(&dir)?;
            for class in store.classes() {
                for entry in store.entries(class) {
                    println!(
                        "{class} {} {} n={}",
                        entry.provenance,
                        entry.timestamp,
                        entry.trajectory.len()
                    );
                }
            }
            Ok(0)
        }
        PriorsAction::Add { store, traj, timestamp } => {
            let cfg = RunConfig::default();
            let dir = store_path(store, &cfg);
            let mut prior_store = load_store_or_empty(&dir)?;
            let trajectory = Trajectory::load(traj).map_err(|e| e.to_string())?;
            let class = trajectory.door_class;
            let n = trajectory.len();
            prior_store.push(StoredTrajectory {
                trajectory,
                provenance: Provenance::HumanDemonstration,
                timestamp: *timestamp,
            });
            prior_store.save(&dir).map_err(|e| e.to_string())?;
            println!("added {class} n={n}");
            Ok(0)
        }
        PriorsAction::Run { store, traj, timestamp, config, seed } => {
            let cfg = load_config(config)?;
            let dir = store_path(store, &cfg);
            let mut prior_store = load_store_or_empty(&dir)?;
            let trajectory = Trajectory::load(traj).map_err(|e| e.to_string())?;
            let mut mcfg: MlesacConfig = cfg.mlesac(Some(DEFAULT_OUTLIER_VOLUME));
            if let Some(s) = seed {
                mcfg.seed = *s;
            }
            let selection = select_with_priors(
                &trajectory,
                &mut prior_store,
                &mcfg,
                Provenance::RobotExperience,
                *timestamp,
            )
            .map_err(|e| e.to_string())?;
            prior_store.save(&dir).map_err(|e| e.to_string())?;
            print!("{}", selection.best().posterior.report());
            println!("{}", selection.best().winning_fit().model.describe());
            match selection.merged_with {
                Some(idx) => println!("merged with entry {idx}"),
                None => println!("appended"),
            }
            println!("store size {}", prior_store.len());
            Ok(0)
        }
    }
}

fn cmd_experiment(
    name: &str,
    seeds: usize,
    out_dir: &Path,
    seed: u64,
    threads: Option<usize>,
    config: &Option<PathBuf>,
) -> Result<u8, String> {
    if seeds < 1 {
        return Err("seeds must be at least 1".into());
    }
    let cfg = load_config(config)?;
    let threads = threads.unwrap_or(cfg.threads);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| format!("io error on {}: {e}", out_dir.display()))?;
    let write = |file: &str, text: &str| -> Result<(), String> {
        let path = out_dir.join(file);
        std::fs::write(&path, text).map_err(|e| format!("io error on {}: {e}", path.display()))?;
        println!("wrote {file}");
        Ok(())
    };
    match name {
        "fig13a" => {
            let fig = run_fig13a(seeds, seed, threads).map_err(|e| e.to_string())?;
            write("fig13a_prismatic.csv", &fig.prismatic.to_csv())?;
            write("fig13a_revolute.csv", &fig.revolute.to_csv())?;
            Ok(0)
        }
        "fig13b" => {
            let regimes = run_fig13b(seeds, seed, threads).map_err(|e| e.to_string())?;
            for regime in &regimes {
                write(&format!("fig13b_{}.csv", regime.name), &regime.stats.to_csv())?;
            }
            write("fig13b_convergence.csv", &convergence_csv(&regimes, seed))?;
            Ok(0)
        }
        other => Err(format!("unknown experiment {other:?} (expected fig13a or fig13b)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Grasp { cloud, boxes, config, seed } => cmd_grasp(cloud, boxes, config, *seed),
        Command::Fit { traj, config, seed } => cmd_fit(traj, config, *seed),
        Command::Open { door, out, use_priors, store, config, seed, iters, step } => {
            cmd_open(door, out, *use_priors, store, config, *seed, *iters, *step)
        }
        Command::Priors { action } => cmd_priors(action),
        Command::Experiment { name, seeds, out_dir, seed, threads, config } => {
            cmd_experiment(name, *seeds, out_dir, *seed, *threads, config)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
