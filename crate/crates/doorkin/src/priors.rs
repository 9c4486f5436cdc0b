//! Prior-experience store and merge-based model selection.
//!
//! Previously observed trajectories are kept per door class. When a new
//! trajectory arrives, each stored trajectory of the same class is tested
//! for compatibility: the pair is merged when the joint fit has more
//! evidence than the two separate fits, compared through BIC-based
//! log-evidence proxies (-BIC/2). A merged union replaces the stored entry;
//! otherwise the new trajectory is appended.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::kinfit::{DoorClass, KinfitError, MlesacConfig, Trajectory};
use crate::modelsel::{bic, select_model, ModelselError, SelectionOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum PriorsError {
    #[error("empty trajectory union")]
    EmptyUnion,
    #[error(transparent)]
    Selection(#[from] ModelselError),
    #[error(transparent)]
    Fit(#[from] KinfitError),
    #[error("{path}:{line}: {msg}")]
    Manifest { path: String, line: usize, msg: String },
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    RobotExperience,
    HumanDemonstration,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::RobotExperience => f.write_str("robot_experience"),
            Provenance::HumanDemonstration => f.write_str("human_demonstration"),
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "robot_experience" => Ok(Provenance::RobotExperience),
            "human_demonstration" => Ok(Provenance::HumanDemonstration),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrajectory {
    pub trajectory: Trajectory,
    pub provenance: Provenance,
    pub timestamp: u64,
}

/// Trajectory records grouped by door class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriorStore {
    entries: BTreeMap<DoorClass, Vec<StoredTrajectory>>,
}

/// 64-bit FNV-1a hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// 64-bit FNV-1a over the serialized trajectory, printed as 16 hex digits.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a(bytes))
}

impl PriorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self, class: DoorClass) -> &[StoredTrajectory] {
        self.entries.get(&class).map_or(&[], |v| v.as_slice())
    }

    pub fn classes(&self) -> impl Iterator<Item = DoorClass> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, entry: StoredTrajectory) {
        self.entries
            .entry(entry.trajectory.door_class)
            .or_default()
            .push(entry);
    }

    /// Persist as `store.manifest` plus one content-addressed .traj file per
    /// entry in `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), PriorsError> {
        let io_err = |path: &Path, e: std::io::Error| PriorsError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut manifest = String::new();
        for entries in self.entries.values() {
            for entry in entries {
                let body = entry.trajectory.serialize();
                let filename = format!("{}.traj", fnv1a_hex(body.as_bytes()));
                let path = dir.join(&filename);
                std::fs::write(&path, &body).map_err(|e| io_err(&path, e))?;
                manifest.push_str(&format!(
                    "{} {} {} {}\n",
                    entry.trajectory.door_class, entry.provenance, entry.timestamp, filename
                ));
            }
        }
        let manifest_path = dir.join("store.manifest");
        std::fs::write(&manifest_path, manifest).map_err(|e| io_err(&manifest_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self, PriorsError> {
        let manifest_path = dir.join("store.manifest");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| PriorsError::Io {
            path: manifest_path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut store = PriorStore::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| PriorsError::Manifest {
                path: manifest_path.display().to_string(),
                line: idx + 1,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            }
            let class: DoorClass = fields[0].parse().map_err(err)?;
            let provenance: Provenance = fields[1].parse().map_err(err)?;
            let timestamp: u64 = fields[2]
                .parse()
                .map_err(|_| err(format!("bad timestamp {:?}", fields[2])))?;
            let traj_path = dir.join(fields[3]);
            let trajectory = Trajectory::load(&traj_path)?;
            if trajectory.door_class != class {
                return Err(err(format!(
                    "manifest class {class} disagrees with {} in {}",
                    trajectory.door_class, fields[3]
                )));
            }
            store.push(StoredTrajectory {
                trajectory,
                provenance,
                timestamp,
            });
        }
        Ok(store)
    }
}

/// Log-evidence proxy of the best-fitting candidate on a trajectory:
/// -BIC/2 under the selected model.
pub fn evidence_score(traj: &Trajectory, cfg: &MlesacConfig) -> Result<f64, PriorsError> {
    if traj.is_empty() {
        return Err(PriorsError::EmptyUnion);
    }
    let outcome = select_model(traj, cfg)?;
    let winner = outcome.winning_fit();
    Ok(-bic(
        winner.log_likelihood,
        winner.model.kind().param_count(),
        traj.len(),
    ) / 2.0)
}

/// Outcome of the prior-aware selection.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSelection {
    /// Fit of the new trajectory alone.
    pub new_alone: SelectionOutcome,
    /// Fit on the merged union, when a stored entry merged.
    pub merged: Option<SelectionOutcome>,
    /// Index (within the class list, pre-update) of the merged entry.
    pub merged_with: Option<usize>,
}

impl PriorSelection {
    /// The model the opening procedure should use: the joint fit when a
    /// merge happened, otherwise the fresh fit.
    pub fn best(&self) -> &SelectionOutcome {
        self.merged.as_ref().unwrap_or(&self.new_alone)
    }
}

fn merge_decision(
    new_traj: &Trajectory,
    stored: &Trajectory,
    cfg: &MlesacConfig,
) -> Result<Option<(f64, SelectionOutcome)>, PriorsError> {
    let union = new_traj.union(stored);
    let joint = evidence_score(&union, cfg)?;
    let separate = evidence_score(new_traj, cfg)? + evidence_score(stored, cfg)?;
    if joint > separate {
        Ok(Some((joint, select_model(&union, cfg)?)))
    } else {
        Ok(None)
    }
}

/// Prior-aware model selection, read-only: evaluates the merge rule against
/// every same-class stored entry but leaves the store untouched.
pub fn evaluate_with_priors(
    new_traj: &Trajectory,
    store: &PriorStore,
    cfg: &MlesacConfig,
) -> Result<PriorSelection, PriorsError> {
    let new_alone = select_model(new_traj, cfg)?;
    let mut best: Option<(f64, usize, SelectionOutcome)> = None;
    for (idx, entry) in store.entries(new_traj.door_class).iter().enumerate() {
        if let Some((proxy, outcome)) = merge_decision(new_traj, &entry.trajectory, cfg)? {
            // strict improvement keeps the earliest stored entry on ties
            if best.as_ref().map_or(true, |(p, _, _)| proxy > *p) {
                best = Some((proxy, idx, outcome));
            }
        }
    }
    let (merged, merged_with) = match best {
        Some((_, idx, outcome)) => (Some(outcome), Some(idx)),
        None => (None, None),
    };
    Ok(PriorSelection {
        new_alone,
        merged,
        merged_with,
    })
}

/// Prior-aware model selection that also updates the store: the matched
/// entry is replaced by the union on a merge, otherwise the new trajectory
/// is appended. The store is unchanged on error.
pub fn select_with_priors(
    new_traj: &Trajectory,
    store: &mut PriorStore,
    cfg: &MlesacConfig,
    provenance: Provenance,
    timestamp: u64,
) -> Result<PriorSelection, PriorsError> {
    let selection = evaluate_with_priors(new_traj, store, cfg)?;
    let class = new_traj.door_class;
    match selection.merged_with {
        Some(idx) => {
            let entries = store.entries.get_mut(&class).expect("merged into known class");
            let stored = &mut entries[idx];
            stored.trajectory = new_traj.union(&stored.trajectory);
            stored.timestamp = stored.timestamp.max(timestamp);
        }
        None => store.push(StoredTrajectory {
            trajectory: new_traj.clone(),
            provenance,
            timestamp,
        }),
    }
    Ok(selection)
}
