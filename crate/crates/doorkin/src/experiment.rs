//! Batch convergence experiments over seeded opening runs.
//!
//! Two studies are provided: posterior evolution against the number of
//! observations for both door types without priors, and the same revolute
//! door opened against prior stores of varying affinity (none, matching,
//! mismatched, balanced). Results aggregate per-iteration posterior mean
//! and standard deviation across seeds, the shaded-band presentation.
//!
//! Seeded runs are independent and fan out across worker threads; logs are
//! merged in seed order, so output is byte-identical for any worker count.

use std::fmt::Write as _;
use std::sync::Mutex;

use crate::doorsim::{
    run_opening, standard_prismatic_door, standard_revolute_door, DoorSpec, DoorsimError,
    OpeningConfig, OpeningLog,
};
use crate::geometry::{fmt_f64, handle_transform, Vec3};
use crate::kinfit::{DoorClass, KinematicModel, ModelKind, PrismaticModel};
use crate::priors::{PriorStore, Provenance, StoredTrajectory};

/// Per-iteration mean and population standard deviation of the true-model
/// posterior across a batch of seeded runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub n_obs: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl BatchStats {
    pub fn from_logs(logs: &[OpeningLog], true_kind: ModelKind) -> Self {
        let iters = logs.iter().map(|l| l.records.len()).min().unwrap_or(0);
        let mut n_obs = Vec::with_capacity(iters);
        let mut mean = Vec::with_capacity(iters);
        let mut std = Vec::with_capacity(iters);
        for i in 0..iters {
            let values: Vec<f64> = logs
                .iter()
                .map(|l| {
                    let r = &l.records[i];
                    match true_kind {
                        ModelKind::Prismatic => r.posterior_prismatic,
                        ModelKind::Revolute => r.posterior_revolute,
                    }
                })
                .collect();
            let m = values.iter().sum::<f64>() / values.len() as f64;
            let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
            n_obs.push(logs[0].records[i].n_obs);
            mean.push(m);
            std.push(var.sqrt());
        }
        Self { n_obs, mean, std }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_obs,mean_posterior,std_posterior\n");
        for ((n, m), s) in self.n_obs.iter().zip(&self.mean).zip(&self.std) {
            let _ = writeln!(out, "{},{},{}", n, fmt_f64(*m), fmt_f64(*s));
        }
        out
    }
}

/// First observation count at which the true-model posterior reaches
/// `level`, if any.
pub fn iterations_to_posterior(log: &OpeningLog, true_kind: ModelKind, level: f64) -> Option<usize> {
    log.records
        .iter()
        .find(|r| {
            let p = match true_kind {
                ModelKind::Prismatic => r.posterior_prismatic,
                ModelKind::Revolute => r.posterior_revolute,
            };
            p >= level
        })
        .map(|r| r.n_obs)
}

/// Run one seeded opening per entry of `seeds`, fanned across `threads`
/// workers, merged in seed order.
pub fn run_batch(
    spec: &DoorSpec,
    base: &OpeningConfig,
    store: Option<&PriorStore>,
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<OpeningLog>, DoorsimError> {
    let threads = threads.max(1).min(seeds.len().max(1));
    let slots: Mutex<Vec<Option<Result<OpeningLog, DoorsimError>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for w in 0..threads {
            let slots = &slots;
            scope.spawn(move || {
                for (i, seed) in seeds.iter().enumerate().skip(w).step_by(threads) {
                    let cfg = OpeningConfig { seed: *seed, ..base.clone() };
                    let log = run_opening(spec, &cfg, store);
                    slots.lock().unwrap()[i] = Some(log);
                }
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("worker covered every slot"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Fig13a {
    pub prismatic_logs: Vec<OpeningLog>,
    pub revolute_logs: Vec<OpeningLog>,
    pub prismatic: BatchStats,
    pub revolute: BatchStats,
}

/// Posterior-evolution study for both standard doors, no priors.
pub fn run_fig13a(seeds: usize, base_seed: u64, threads: usize) -> Result<Fig13a, DoorsimError> {
    assert!(seeds >= 1);
    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| base_seed + i).collect();
    let cfg = OpeningConfig::default();
    let prismatic_logs = run_batch(
        &standard_prismatic_door(0.005, 0.05),
        &cfg,
        None,
        &seed_list,
        threads,
    )?;
    let revolute_logs = run_batch(
        &standard_revolute_door(0.005, 0.05),
        &cfg,
        None,
        &seed_list,
        threads,
    )?;
    let prismatic = BatchStats::from_logs(&prismatic_logs, ModelKind::Prismatic);
    let revolute = BatchStats::from_logs(&revolute_logs, ModelKind::Revolute);
    Ok(Fig13a { prismatic_logs, revolute_logs, prismatic, revolute })
}

/// Prismatic door sharing the revolute door's handle position and initial
/// tangent: the plausible-but-wrong prior for the mismatched regime.
fn tangent_prismatic_door() -> DoorSpec {
    let normal = Vec3::new(-1.0, 0.0, 0.0);
    let handle = Vec3::new(1.5, 0.5, 1.0);
    DoorSpec {
        true_model: KinematicModel::Prismatic(PrismaticModel {
            origin: handle,
            direction: Vec3::new(-1.0, 0.0, 0.0),
        }),
        handle_start: handle_transform(normal, handle).unwrap(),
        travel_limit: 1.2,
        noise_sigma: 0.005,
        outlier_rate: 0.05,
        outlier_volume: standard_revolute_door(0.005, 0.05).outlier_volume,
        door_class: DoorClass::Door,
    }
}

fn store_from(specs: &[&DoorSpec], base_seed: u64) -> PriorStore {
    let mut store = PriorStore::new();
    for (i, spec) in specs.iter().enumerate() {
        let traj = crate::doorsim::generate_trajectory(spec, 40, base_seed + i as u64);
        store.push(StoredTrajectory {
            trajectory: traj,
            provenance: Provenance::HumanDemonstration,
            timestamp: 0,
        });
    }
    store
}

#[derive(Debug, Clone)]
pub struct Fig13bRegime {
    pub name: &'static str,
    pub logs: Vec<OpeningLog>,
    pub stats: BatchStats,
}

/// Prior-affinity study on the standard revolute door: no store, a store
/// of same-door revolute openings, a store of tangent prismatic openings,
/// and a balanced store holding both.
pub fn run_fig13b(
    seeds: usize,
    base_seed: u64,
    threads: usize,
) -> Result<Vec<Fig13bRegime>, DoorsimError> {
    assert!(seeds >= 1);
    let door = standard_revolute_door(0.005, 0.05);
    let tangent = tangent_prismatic_door();
    let matching = store_from(&[&door, &door, &door], 9000);
    let mismatched = store_from(&[&tangent, &tangent, &tangent], 9100);
    let balanced = store_from(&[&door, &door, &tangent, &tangent], 9200);

    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| base_seed + i).collect();
    let base = OpeningConfig::default();
    let with_priors = OpeningConfig { use_priors: true, ..base.clone() };
    let regimes = [
        ("baseline", None, &base),
        ("matching", Some(&matching), &with_priors),
        ("mismatched", Some(&mismatched), &with_priors),
        ("balanced", Some(&balanced), &with_priors),
    ];
    let mut out = Vec::with_capacity(regimes.len());
    for (name, store, cfg) in regimes {
        let logs = run_batch(&door, cfg, store, &seed_list, threads)?;
        let stats = BatchStats::from_logs(&logs, ModelKind::Revolute);
        out.push(Fig13bRegime { name, logs, stats });
    }
    Ok(out)
}

/// Per-seed convergence table: observations to reach posterior 0.9 (0 when
/// never reached) and the final winner, one row per (seed, regime).
pub fn convergence_csv(regimes: &[Fig13bRegime], base_seed: u64) -> String {
    let mut out = String::from("seed,regime,n_to_0_9,final_winner\n");
    for regime in regimes {
        for (i, log) in regime.logs.iter().enumerate() {
            let n = iterations_to_posterior(log, ModelKind::Revolute, 0.9).unwrap_or(0);
            let winner = log.final_winner().expect("nonempty log");
            let _ = writeln!(out, "{},{},{},{}", base_seed + i as u64, regime.name, n, winner);
        }
    }
    out
}

pub fn median_usize(values: &mut [usize]) -> f64 {
    assert!(!values.is_empty());
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_is_worker_count_invariant() {
        let spec = standard_revolute_door(0.005, 0.05);
        let cfg = OpeningConfig { iters: 12, ..Default::default() };
        let seeds: Vec<u64> = (100..106).collect();
        let one = run_batch(&spec, &cfg, None, &seeds, 1).unwrap();
        let eight = run_batch(&spec, &cfg, None, &seeds, 8).unwrap();
        assert_eq!(one, eight);
    }

    #[test]
    fn single_seed_has_zero_std() {
        let fig = run_fig13a(1, 42, 1).unwrap();
        assert!(fig.prismatic.std.iter().all(|s| *s == 0.0));
        let csv = fig.prismatic.to_csv();
        assert!(csv.starts_with("n_obs,mean_posterior,std_posterior\n"));
        assert_eq!(csv.lines().count(), 41);
    }

    #[test]
    fn fig13a_small_batch_converges() {
        let fig = run_fig13a(3, 500, 4).unwrap();
        assert!(*fig.prismatic.mean.last().unwrap() > 0.8, "{:?}", fig.prismatic.mean);
        assert!(*fig.revolute.mean.last().unwrap() > 0.8, "{:?}", fig.revolute.mean);
        // early iterations hover near even odds
        assert!((0.3..=0.7).contains(&fig.prismatic.mean[1]));
        assert!((0.3..=0.7).contains(&fig.revolute.mean[1]));
    }

    #[test]
    fn matching_priors_converge_earlier() {
        let regimes = run_fig13b(5, 700, 4).unwrap();
        let find = |name: &str| regimes.iter().find(|r| r.name == name).unwrap();
        let reach = |r: &Fig13bRegime| -> Vec<usize> {
            r.logs
                .iter()
                .map(|l| iterations_to_posterior(l, ModelKind::Revolute, 0.9).unwrap_or(41))
                .collect()
        };
        let mut base = reach(find("baseline"));
        let mut matched = reach(find("matching"));
        assert!(
            median_usize(&mut matched) < median_usize(&mut base),
            "matching {matched:?} vs baseline {base:?}"
        );
        // plausible-but-wrong priors still end on the true model
        for log in &find("mismatched").logs {
            assert_eq!(log.final_winner(), Some(ModelKind::Revolute));
        }
        let csv = convergence_csv(&regimes, 700);
        assert!(csv.starts_with("seed,regime,n_to_0_9,final_winner\n"));
        assert_eq!(csv.lines().count(), 1 + 4 * 5);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median_usize(&mut [3, 1, 2]), 2.0);
        assert_eq!(median_usize(&mut [4, 1, 2, 3]), 2.5);
    }
}
