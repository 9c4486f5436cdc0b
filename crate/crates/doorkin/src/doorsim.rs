//! Ground-truth door simulator: synthetic trajectories and scenes, the
//! compliance abstraction, and the iterative opening loop.
//!
//! The simulated door is exactly its kinematic model. A commanded Cartesian
//! step is projected onto the model's tangent at the current handle pose
//! and the handle advances on the manifold by the projected arc length: the
//! door, not the command, dictates the path. The opening loop starts from a
//! prismatic guess along the pulling direction, executes compliant steps,
//! appends noisy observations, and re-selects the model each iteration.
//!
//! The model parameter is signed and bounded by the travel limit on both
//! sides of the starting pose, so the loop cannot stall on the initial
//! direction guess.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::cloud::{BoundingBox, ObjectClass, PointCloud};
use crate::geometry::{fmt_f64, orthonormal_complement, Pose, Vec3};
use crate::kinfit::{
    residual, DoorClass, KinematicModel, MlesacConfig, ModelKind, PrismaticModel, RevoluteModel,
    Trajectory,
};
use crate::modelsel::{select_model, SelectionOutcome};
use crate::priors::{evaluate_with_priors, PriorStore, PriorsError};
use crate::tsr::{tsr_from_prismatic, tsr_from_revolute, TSRSpec};

#[derive(Debug, Error, PartialEq)]
pub enum DoorsimError {
    #[error("travel limit reached")]
    LimitReached,
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Priors(#[from] PriorsError),
}

/// Axis-aligned box used as the support of the uniform outlier draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        assert!(lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z, "box requires lo <= hi");
        Self { lo, hi }
    }

    pub fn volume(&self) -> f64 {
        let e = self.hi - self.lo;
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        p.x >= self.lo.x
            && p.x <= self.hi.x
            && p.y >= self.lo.y
            && p.y <= self.hi.y
            && p.z >= self.lo.z
            && p.z <= self.hi.z
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec3 {
        Vec3::new(
            rng.gen_range(self.lo.x..=self.hi.x),
            rng.gen_range(self.lo.y..=self.hi.y),
            rng.gen_range(self.lo.z..=self.hi.z),
        )
    }
}

/// Full description of a simulated door.
#[derive(Debug, Clone, PartialEq)]
pub struct DoorSpec {
    pub true_model: KinematicModel,
    /// Handle pose at parameter 0; its first rotation column is the door
    /// plane normal oriented toward the sensor.
    pub handle_start: Pose,
    /// Meters of line travel (prismatic) or radians of sweep (revolute),
    /// allowed on either side of the start.
    pub travel_limit: f64,
    pub noise_sigma: f64,
    pub outlier_rate: f64,
    pub outlier_volume: Aabb,
    pub door_class: DoorClass,
}

impl DoorSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(format!("outlier_rate {} outside [0,1]", self.outlier_rate));
        }
        if self.travel_limit <= 0.0 {
            return Err(format!("travel_limit {} must be positive", self.travel_limit));
        }
        if self.noise_sigma < 0.0 {
            return Err(format!("noise_sigma {} must be nonnegative", self.noise_sigma));
        }
        Ok(())
    }

    /// Exact handle pose at a signed model parameter (meters for
    /// prismatic, radians for revolute).
    pub fn pose_at(&self, param: f64) -> Pose {
        match &self.true_model {
            KinematicModel::Prismatic(m) => Pose::new(
                self.handle_start.rotation,
                self.handle_start.translation + param * m.direction,
            ),
            KinematicModel::Revolute(m) => {
                let rot = Pose::from_axis_angle(m.normal, param).rotation;
                Pose::new(
                    rot * self.handle_start.rotation,
                    m.center + rot * (self.handle_start.translation - m.center),
                )
            }
        }
    }
}

/// Sample `n` observations at uniformly increasing parameters up to the
/// travel limit, with isotropic Gaussian translation noise and independent
/// uniform outlier replacement. Returns the per-observation outlier labels
/// alongside the trajectory.
pub fn generate_trajectory_labeled(
    spec: &DoorSpec,
    n: usize,
    seed: u64,
) -> (Trajectory, Vec<bool>) {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut poses = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = if n == 1 {
            0.0
        } else {
            spec.travel_limit * i as f64 / (n - 1) as f64
        };
        let mut pose = spec.pose_at(t);
        let outlier = rng.gen::<f64>() < spec.outlier_rate;
        if outlier {
            pose.translation = spec.outlier_volume.sample(&mut rng);
        } else if spec.noise_sigma > 0.0 {
            pose.translation += Vec3::new(
                noise.sample(&mut rng),
                noise.sample(&mut rng),
                noise.sample(&mut rng),
            );
        }
        poses.push(pose);
        labels.push(outlier);
    }
    (Trajectory::new(poses, spec.door_class), labels)
}

pub fn generate_trajectory(spec: &DoorSpec, n: usize, seed: u64) -> Trajectory {
    generate_trajectory_labeled(spec, n, seed).0
}

/// Ground truth attached to a generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    /// Door plane normal oriented toward the sensor.
    pub door_normal: Vec3,
    /// Centroid of the generated handle plate points.
    pub handle_centroid: Vec3,
}

const PLATE_PROTRUSION: f64 = 0.04;
const PLATE_HALF_W: f64 = 0.07;
const PLATE_HALF_H: f64 = 0.02;
const DOOR_HALF_W: f64 = 0.45;
const DOOR_HALF_H: f64 = 0.55;
const FOCAL_PX: f64 = 260.0;
const DOOR_PAD_PX: usize = 2;
const HANDLE_PAD_PX: usize = 8;

struct ScenePanel {
    normal: Vec3,   // toward the sensor
    handle: Vec3,   // plate center (front face)
    b1: Vec3,       // in-plane basis
    b2: Vec3,
    door_center: Vec3,
}

fn sensor_facing_normal(spec: &DoorSpec) -> Vec3 {
    let a = spec.handle_start.rotation.column(0).into_owned();
    // scene synthesis needs the normal pointing at the sensor origin
    if a.dot(&spec.handle_start.translation) > 0.0 {
        -a
    } else {
        a
    }
}

fn scene_panel(spec: &DoorSpec, handle_offset: &Vec3) -> ScenePanel {
    let normal = sensor_facing_normal(spec);
    let handle = spec.handle_start.translation;
    let (b1, b2) = orthonormal_complement(&normal);
    let in_plane = handle_offset - handle_offset.dot(&normal) * normal;
    let door_center = handle - PLATE_PROTRUSION * normal + in_plane;
    ScenePanel { normal, handle, b1, b2, door_center }
}

/// Organized cloud of one or more door panels with protruding handle
/// plates, seen by a pinhole sensor at the origin aimed at the first
/// handle, plus detection boxes from the known projections.
pub fn generate_scene_multi(
    doors: &[(DoorSpec, Vec3)],
    dims: (usize, usize),
    seed: u64,
) -> (PointCloud, Vec<BoundingBox>, Vec<SceneTruth>) {
    assert!(!doors.is_empty());
    let (width, height) = dims;
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let panels: Vec<ScenePanel> = doors
        .iter()
        .map(|(spec, off)| scene_panel(spec, off))
        .collect();

    // camera frame: x-axis at the first handle, y/z from the complement
    let cam_x = panels[0].handle.normalize();
    let (cam_y, cam_z) = orthonormal_complement(&cam_x);
    let cam = nalgebra::Matrix3::from_columns(&[cam_x, cam_y, cam_z]);
    let project = |p: &Vec3| -> Option<(f64, f64)> {
        let q = cam.transpose() * p;
        if q.x <= 1e-6 {
            return None;
        }
        Some((cx - FOCAL_PX * q.y / q.x, cy - FOCAL_PX * q.z / q.x))
    };

    let mut cloud = PointCloud::new(width, height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut plate_sums = vec![(Vec3::zeros(), 0usize); panels.len()];
    for v in 0..height {
        for u in 0..width {
            let dir = (cam * Vec3::new(1.0, (cx - u as f64) / FOCAL_PX, (cy - v as f64) / FOCAL_PX))
                .normalize();
            // nearest hit across panels; each panel is a door rectangle
            // with a raised plate rectangle
            let mut hit: Option<(f64, Vec3, Option<usize>)> = None;
            for (pi, panel) in panels.iter().enumerate() {
                for (plane_point, is_plate) in [
                    (panel.handle, true),
                    (panel.door_center, false),
                ] {
                    let denom = panel.normal.dot(&dir);
                    if denom.abs() < 1e-9 {
                        continue;
                    }
                    let s = panel.normal.dot(&(plane_point - Vec3::zeros())) / denom;
                    if s <= 0.0 {
                        continue;
                    }
                    let p = s * dir;
                    let rel = p - if is_plate { panel.handle } else { panel.door_center };
                    let (w_ext, h_ext) = if is_plate {
                        (PLATE_HALF_W, PLATE_HALF_H)
                    } else {
                        (DOOR_HALF_W, DOOR_HALF_H)
                    };
                    if panel.b1.dot(&rel).abs() > w_ext || panel.b2.dot(&rel).abs() > h_ext {
                        continue;
                    }
                    if hit.as_ref().map_or(true, |(best_s, _, _)| s < *best_s) {
                        hit = Some((s, p, is_plate.then_some(pi)));
                    }
                }
            }
            if let Some((s, _, plate_of)) = hit {
                let sigma = doors[plate_of.map_or(0, |pi| pi)].0.noise_sigma;
                let depth = s + sigma * noise.sample(&mut rng);
                let p = depth * dir;
                cloud.set(u, v, p);
                if let Some(pi) = plate_of {
                    plate_sums[pi].0 += p;
                    plate_sums[pi].1 += 1;
                }
            }
        }
    }

    let clamp_box = |pts: &[Vec3], pad: usize, class: ObjectClass| -> Option<BoundingBox> {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            let (u, v) = project(p)?;
            lo = (lo.0.min(u), lo.1.min(v));
            hi = (hi.0.max(u), hi.1.max(v));
        }
        let x_min = (lo.0.floor() as isize - pad as isize).max(0) as usize;
        let y_min = (lo.1.floor() as isize - pad as isize).max(0) as usize;
        let x_max = ((hi.0.ceil() as usize) + pad).min(width - 1);
        let y_max = ((hi.1.ceil() as usize) + pad).min(height - 1);
        if x_min >= width || y_min >= height || x_max < x_min || y_max < y_min {
            return None;
        }
        Some(BoundingBox { class, x_min, y_min, x_max, y_max, confidence: 1.0 })
    };

    let mut boxes = Vec::new();
    let mut truths = Vec::new();
    for ((spec, _), panel) in doors.iter().zip(&panels) {
        let door_class = match spec.door_class {
            DoorClass::Door => ObjectClass::Door,
            DoorClass::CabinetDoor => ObjectClass::CabinetDoor,
            DoorClass::RefrigeratorDoor => ObjectClass::RefrigeratorDoor,
        };
        let corners = |center: &Vec3, w: f64, h: f64| -> Vec<Vec3> {
            [(-w, -h), (-w, h), (w, -h), (w, h)]
                .iter()
                .map(|(s1, s2)| center + *s1 * panel.b1 + *s2 * panel.b2)
                .collect()
        };
        if let Some(b) = clamp_box(
            &corners(&panel.door_center, DOOR_HALF_W, DOOR_HALF_H),
            DOOR_PAD_PX,
            door_class,
        ) {
            boxes.push(b);
        }
        if let Some(b) = clamp_box(
            &corners(&panel.handle, PLATE_HALF_W, PLATE_HALF_H),
            HANDLE_PAD_PX,
            ObjectClass::Handle,
        ) {
            boxes.push(b);
        }
    }
    for ((sum, count), panel) in plate_sums.iter().zip(&panels) {
        truths.push(SceneTruth {
            door_normal: panel.normal,
            handle_centroid: if *count > 0 { sum / *count as f64 } else { panel.handle },
        });
    }
    (cloud, boxes, truths)
}

/// Single-door scene; see [`generate_scene_multi`].
pub fn generate_scene(
    door: &DoorSpec,
    handle_offset: Vec3,
    dims: (usize, usize),
    seed: u64,
) -> (PointCloud, Vec<BoundingBox>, SceneTruth) {
    let (cloud, boxes, mut truths) =
        generate_scene_multi(&[(door.clone(), handle_offset)], dims, seed);
    (cloud, boxes, truths.remove(0))
}

/// Exact on-manifold pose after advancing the model parameter by the
/// signed arc length `s` from `current` (assumed on the manifold).
pub fn advance_on_manifold(model: &KinematicModel, current: &Pose, s: f64) -> Pose {
    match model {
        KinematicModel::Prismatic(m) => Pose::new(
            current.rotation,
            current.translation + s * m.direction,
        ),
        KinematicModel::Revolute(m) => {
            let theta = s / m.radius;
            let rot = Pose::from_axis_angle(m.normal, theta).rotation;
            Pose::new(
                rot * current.rotation,
                m.center + rot * (current.translation - m.center),
            )
        }
    }
}

/// Signed tangent direction of the model at a pose: the direction of
/// increasing parameter.
pub fn tangent_at(model: &KinematicModel, pose: &Pose) -> Vec3 {
    match model {
        KinematicModel::Prismatic(m) => m.direction,
        KinematicModel::Revolute(m) => {
            let rel = pose.translation - m.center;
            let radial = rel - m.normal.dot(&rel) * m.normal;
            m.normal.cross(&radial).normalize()
        }
    }
}

/// Compliance abstraction: project the commanded Cartesian displacement
/// onto the true model's tangent at `current`, clamp the advance to
/// `max_step`, and return the exact on-manifold pose with the signed
/// advance actually taken.
pub fn compliant_step(
    true_model: &KinematicModel,
    current: &Pose,
    commanded_delta: &Vec3,
    max_step: f64,
) -> (Pose, f64) {
    let tangent = tangent_at(true_model, current);
    let s = commanded_delta.dot(&tangent).clamp(-max_step, max_step);
    (advance_on_manifold(true_model, current, s), s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpeningConfig {
    /// Commanded arc/line length per iteration, meters.
    pub step: f64,
    pub iters: usize,
    pub seed: u64,
    pub use_priors: bool,
    /// MLESAC settings shared by every per-iteration fit.
    pub sigma: f64,
    pub hypotheses: usize,
    pub em_steps: usize,
}

impl Default for OpeningConfig {
    fn default() -> Self {
        Self {
            step: 0.03,
            iters: 40,
            seed: 0,
            use_priors: false,
            sigma: 0.005,
            hypotheses: 200,
            em_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpeningRecord {
    pub iter: usize,
    pub n_obs: usize,
    pub posterior_prismatic: f64,
    pub posterior_revolute: f64,
    pub winner: ModelKind,
    pub step_command: Vec3,
    pub achieved_pose: Pose,
    /// True-manifold residual of the noisy observation taken this
    /// iteration.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpeningLog {
    pub records: Vec<OpeningRecord>,
    /// Set when the door hit its travel limit before the last iteration.
    pub limit_reached: bool,
    /// Model estimate after the last iteration (the initial guess if no
    /// selection ever ran).
    pub final_estimate: Option<KinematicModel>,
}

impl OpeningLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,n_obs,posterior_prismatic,posterior_revolute,winner,residual\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iter,
                r.n_obs,
                fmt_f64(r.posterior_prismatic),
                fmt_f64(r.posterior_revolute),
                r.winner,
                fmt_f64(r.residual)
            );
        }
        out
    }

    pub fn final_winner(&self) -> Option<ModelKind> {
        self.records.last().map(|r| r.winner)
    }
}

fn mlesac_config(cfg: &OpeningConfig, spec: &DoorSpec, iter: usize) -> MlesacConfig {
    MlesacConfig {
        hypotheses: cfg.hypotheses,
        sigma: cfg.sigma,
        // explicit volume: early trajectories have a degenerate bounding
        // box, which would otherwise swamp the inlier density
        outlier_volume: Some(spec.outlier_volume.volume().max(1e-3)),
        em_steps: cfg.em_steps,
        seed: cfg.seed ^ crate::priors::fnv1a(&(iter as u64).to_le_bytes()),
        reestimate_sigma: false,
    }
}

/// TSR for the current model estimate with incremental travel `step`,
/// anchored at the current handle pose. The z/roll interval direction
/// follows `heading` so commanded motion continues the opening.
fn step_tsr(estimate: &KinematicModel, pose: &Pose, heading: &Vec3, step: f64) -> Option<TSRSpec> {
    match estimate {
        KinematicModel::Prismatic(m) => {
            let dir = if m.direction.dot(heading) < 0.0 { -m.direction } else { m.direction };
            tsr_from_prismatic(&PrismaticModel { origin: m.origin, direction: dir }, step, pose).ok()
        }
        KinematicModel::Revolute(m) => {
            let tangent = tangent_at(estimate, pose);
            let normal = if tangent.dot(heading) < 0.0 { -m.normal } else { m.normal };
            tsr_from_revolute(
                &RevoluteModel { center: m.center, normal, radius: m.radius },
                (step / m.radius).max(1e-9),
                pose,
            )
            .ok()
        }
    }
}

/// Iterative compliant opening. With no observations the estimate is
/// prismatic along the pulling direction (opposite the door-plane normal);
/// each iteration commands one step along the current estimate, executes
/// it compliantly on the true door, appends a noisy observation, and
/// re-selects the model (consulting the prior store when `use_priors`).
pub fn run_opening(
    spec: &DoorSpec,
    cfg: &OpeningConfig,
    store: Option<&PriorStore>,
) -> Result<OpeningLog, DoorsimError> {
    assert!(cfg.iters >= 1);
    spec.validate().map_err(|msg| DoorsimError::Parse {
        path: "doorspec".into(),
        line: 0,
        msg,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();

    let door_normal = spec.handle_start.rotation.column(0).into_owned();
    let mut heading = -door_normal;
    let mut estimate = KinematicModel::Prismatic(PrismaticModel {
        origin: spec.handle_start.translation,
        direction: heading,
    });
    let mut pose = spec.handle_start;
    let mut param = 0.0f64;
    let mut observations: Vec<Pose> = Vec::new();
    let mut log = OpeningLog::default();

    for iter in 0..cfg.iters {
        // constraint frame for this step (kept for side-effect-free
        // validation; the command below is its free direction)
        let _tsr = step_tsr(&estimate, &pose, &heading, cfg.step);
        let tangent = tangent_at(&estimate, &pose);
        let dir = if tangent.dot(&heading) < 0.0 { -tangent } else { tangent };
        let command = cfg.step * dir;

        // compliant execution against the true door, bounded by the
        // remaining signed travel
        let true_tangent = tangent_at(&spec.true_model, &pose);
        let arc_scale = match &spec.true_model {
            KinematicModel::Prismatic(_) => 1.0,
            KinematicModel::Revolute(m) => 1.0 / m.radius,
        };
        let wanted = command.dot(&true_tangent);
        let lo = (-spec.travel_limit - param) / arc_scale;
        let hi = (spec.travel_limit - param) / arc_scale;
        let s = wanted.clamp(lo, hi).clamp(-cfg.step, cfg.step);
        if s.abs() < 1e-12 && wanted.abs() > 1e-12 {
            log.limit_reached = true;
            log.final_estimate = Some(estimate);
            return Ok(log);
        }
        pose = advance_on_manifold(&spec.true_model, &pose, s);
        param += s * arc_scale;
        if s.abs() > 1e-12 {
            heading = (s * true_tangent).normalize();
        }

        // noisy observation of the achieved pose
        let mut observed = pose;
        if rng.gen::<f64>() < spec.outlier_rate {
            observed.translation = spec.outlier_volume.sample(&mut rng);
        } else if spec.noise_sigma > 0.0 {
            observed.translation += Vec3::new(
                noise.sample(&mut rng),
                noise.sample(&mut rng),
                noise.sample(&mut rng),
            );
        }
        let obs_residual = residual(&spec.true_model, &observed);
        observations.push(observed);

        // re-estimate
        let n = observations.len();
        let (p_pri, p_rev, winner) = if n >= 3 {
            let traj = Trajectory::new(observations.clone(), spec.door_class);
            let mcfg = mlesac_config(cfg, spec, iter);
            let outcome: SelectionOutcome = if cfg.use_priors {
                match store {
                    Some(store) => evaluate_with_priors(&traj, store, &mcfg)?.best().clone(),
                    None => select_model(&traj, &mcfg).map_err(PriorsError::from)?,
                }
            } else {
                select_model(&traj, &mcfg).map_err(PriorsError::from)?
            };
            estimate = outcome.winning_fit().model;
            (
                outcome.posterior.posterior_of(ModelKind::Prismatic),
                outcome.posterior.posterior_of(ModelKind::Revolute),
                outcome.posterior.winner,
            )
        } else {
            (0.5, 0.5, ModelKind::Prismatic)
        };

        log.records.push(OpeningRecord {
            iter,
            n_obs: n,
            posterior_prismatic: p_pri,
            posterior_revolute: p_rev,
            winner,
            step_command: command,
            achieved_pose: pose,
            residual: obs_residual,
        });
    }
    log.final_estimate = Some(estimate);
    Ok(log)
}

fn parse_vec3(value: &str) -> Result<Vec3, String> {
    let fields: Vec<&str> = value.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 numbers, found {}", fields.len()));
    }
    let mut v = [0.0; 3];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f.parse().map_err(|_| format!("bad number {f:?}"))?;
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

impl DoorSpec {
    /// Serialize as line-oriented `key = value` text (.door format).
    pub fn serialize(&self) -> String {
        let vec = |v: &Vec3| format!("{} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z));
        let mut out = String::new();
        match &self.true_model {
            KinematicModel::Prismatic(m) => {
                out.push_str("model = prismatic\n");
                let _ = writeln!(out, "origin = {}", vec(&m.origin));
                let _ = writeln!(out, "direction = {}", vec(&m.direction));
            }
            KinematicModel::Revolute(m) => {
                out.push_str("model = revolute\n");
                let _ = writeln!(out, "center = {}", vec(&m.center));
                let _ = writeln!(out, "normal = {}", vec(&m.normal));
                let _ = writeln!(out, "radius = {}", fmt_f64(m.radius));
            }
        }
        let _ = writeln!(out, "handle_start = {}", self.handle_start.to_line());
        let _ = writeln!(out, "travel_limit = {}", fmt_f64(self.travel_limit));
        let _ = writeln!(out, "noise_sigma = {}", fmt_f64(self.noise_sigma));
        let _ = writeln!(out, "outlier_rate = {}", fmt_f64(self.outlier_rate));
        let _ = writeln!(out, "outlier_lo = {}", vec(&self.outlier_volume.lo));
        let _ = writeln!(out, "outlier_hi = {}", vec(&self.outlier_volume.hi));
        let _ = writeln!(out, "door_class = {}", self.door_class);
        out
    }

    pub fn deserialize(text: &str, origin: &str) -> Result<Self, DoorsimError> {
        let mut model_kind: Option<String> = None;
        let mut fields: std::collections::HashMap<&str, (usize, String)> =
            std::collections::HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| DoorsimError::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "model" => model_kind = Some(value.to_string()),
                "origin" | "direction" | "center" | "normal" | "radius" | "handle_start"
                | "travel_limit" | "noise_sigma" | "outlier_rate" | "outlier_lo"
                | "outlier_hi" | "door_class" => {
                    fields.insert(
                        match key {
                            "origin" => "origin",
                            "direction" => "direction",
                            "center" => "center",
                            "normal" => "normal",
                            "radius" => "radius",
                            "handle_start" => "handle_start",
                            "travel_limit" => "travel_limit",
                            "noise_sigma" => "noise_sigma",
                            "outlier_rate" => "outlier_rate",
                            "outlier_lo" => "outlier_lo",
                            "outlier_hi" => "outlier_hi",
                            _ => "door_class",
                        },
                        (idx + 1, value.to_string()),
                    );
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        let err_at = |line: usize, msg: String| DoorsimError::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let take = |fields: &std::collections::HashMap<&str, (usize, String)>,
                    key: &str|
         -> Result<(usize, String), DoorsimError> {
            fields
                .get(key)
                .cloned()
                .ok_or_else(|| err_at(0, format!("missing key {key:?}")))
        };
        let vec_field = |key: &str| -> Result<Vec3, DoorsimError> {
            let (line, value) = take(&fields, key)?;
            parse_vec3(&value).map_err(|m| err_at(line, m))
        };
        let num_field = |key: &str| -> Result<f64, DoorsimError> {
            let (line, value) = take(&fields, key)?;
            value.parse().map_err(|_| err_at(line, format!("bad number {value:?}")))
        };
        let true_model = match model_kind.as_deref() {
            Some("prismatic") => KinematicModel::Prismatic(PrismaticModel {
                origin: vec_field("origin")?,
                direction: vec_field("direction")?.normalize(),
            }),
            Some("revolute") => KinematicModel::Revolute(RevoluteModel {
                center: vec_field("center")?,
                normal: vec_field("normal")?.normalize(),
                radius: num_field("radius")?,
            }),
            Some(other) => return Err(err_at(0, format!("unknown model {other:?}"))),
            None => return Err(err_at(0, "missing key \"model\"".into())),
        };
        let (hs_line, hs_value) = take(&fields, "handle_start")?;
        let handle_start =
            Pose::from_line(&hs_value).map_err(|e| err_at(hs_line, e.to_string()))?;
        let (dc_line, dc_value) = take(&fields, "door_class")?;
        let door_class: DoorClass = dc_value.parse().map_err(|m| err_at(dc_line, m))?;
        let spec = DoorSpec {
            true_model,
            handle_start,
            travel_limit: num_field("travel_limit")?,
            noise_sigma: num_field("noise_sigma")?,
            outlier_rate: num_field("outlier_rate")?,
            outlier_volume: Aabb::new(vec_field("outlier_lo")?, vec_field("outlier_hi")?),
            door_class,
        };
        spec.validate().map_err(|msg| err_at(0, msg))?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), DoorsimError> {
        std::fs::write(path, self.serialize()).map_err(|e| DoorsimError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, DoorsimError> {
        let text = std::fs::read_to_string(path).map_err(|e| DoorsimError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::deserialize(&text, &path.display().to_string())
    }
}

/// Drawer-like prismatic door in front of the sensor: panel at x = 1.5
/// facing the origin, opening away from the sensor.
pub fn standard_prismatic_door(noise_sigma: f64, outlier_rate: f64) -> DoorSpec {
    let normal = Vec3::new(-1.0, 0.0, 0.0);
    let handle = Vec3::new(1.5, 0.2, 1.0);
    let handle_start = crate::geometry::handle_transform(normal, handle).unwrap();
    DoorSpec {
        true_model: KinematicModel::Prismatic(PrismaticModel {
            origin: handle,
            direction: Vec3::new(1.0, 0.0, 0.0),
        }),
        handle_start,
        travel_limit: 1.5,
        noise_sigma,
        outlier_rate,
        outlier_volume: Aabb::new(Vec3::new(0.5, -1.0, 0.0), Vec3::new(3.0, 1.0, 2.0)),
        door_class: DoorClass::CabinetDoor,
    }
}

/// Hinged revolute door: vertical hinge at (1.5, -0.4), radius 0.9 m,
/// handle at (1.5, 0.5, 1.0) facing the origin.
pub fn standard_revolute_door(noise_sigma: f64, outlier_rate: f64) -> DoorSpec {
    let normal = Vec3::new(-1.0, 0.0, 0.0);
    let handle = Vec3::new(1.5, 0.5, 1.0);
    let handle_start = crate::geometry::handle_transform(normal, handle).unwrap();
    DoorSpec {
        true_model: KinematicModel::Revolute(RevoluteModel {
            center: Vec3::new(1.5, -0.4, 1.0),
            normal: Vec3::new(0.0, 0.0, 1.0),
            radius: 0.9,
        }),
        handle_start,
        travel_limit: 1.4,
        noise_sigma,
        outlier_rate,
        outlier_volume: Aabb::new(Vec3::new(0.5, -1.5, 0.0), Vec3::new(3.0, 1.5, 2.0)),
        door_class: DoorClass::Door,
    }
}
