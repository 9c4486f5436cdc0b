//! Candidate kinematic models and MLESAC fitting.
//!
//! Two candidates describe how a grasped handle can move: a prismatic
//! model (translation along a fixed axis) and a revolute model (rotation
//! along a circular arc). Fitting scores minimal-sample hypotheses by the
//! log-likelihood of a Gaussian-inlier / uniform-outlier mixture, with the
//! mixture coefficient estimated per hypothesis by expectation
//! maximization, then refines the winner on its consensus set.
//!
//! Only the translation components of the observed poses enter the fit;
//! both models parameterize point paths. Orientation residuals are left to
//! the caller as diagnostics.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Pose, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum KinfitError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("coincident points cannot define a translation axis")]
    CoincidentPoints,
    #[error("collinear points cannot define a circle")]
    CollinearPoints,
    #[error("consensus set is degenerate for this model")]
    DegenerateInliers,
    #[error("every minimal sample was degenerate")]
    DegenerateObservations,
    #[error("fit collapsed to outliers (gamma = {0:.4})")]
    AllOutliers(f64),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Door classes carried by trajectories and the prior store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DoorClass {
    Door,
    CabinetDoor,
    RefrigeratorDoor,
}

impl fmt::Display for DoorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DoorClass::Door => "door",
            DoorClass::CabinetDoor => "cabinet_door",
            DoorClass::RefrigeratorDoor => "refrigerator_door",
        };
        f.write_str(s)
    }
}

impl FromStr for DoorClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "door" => Ok(DoorClass::Door),
            "cabinet_door" => Ok(DoorClass::CabinetDoor),
            "refrigerator_door" => Ok(DoorClass::RefrigeratorDoor),
            other => Err(format!("unknown door class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Prismatic,
    Revolute,
}

impl ModelKind {
    pub fn minimal_sample_size(&self) -> usize {
        match self {
            ModelKind::Prismatic => 2,
            ModelKind::Revolute => 3,
        }
    }

    /// Parameter count used by the BIC penalty.
    pub fn param_count(&self) -> usize {
        match self {
            ModelKind::Prismatic => 6,
            ModelKind::Revolute => 7,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Prismatic => f.write_str("prismatic"),
            ModelKind::Revolute => f.write_str("revolute"),
        }
    }
}

/// Translation along unit `direction` from a fixed `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrismaticModel {
    pub origin: Vec3,
    pub direction: Vec3,
}

/// Circular arc of `radius` about `center`, in the plane with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevoluteModel {
    pub center: Vec3,
    pub normal: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KinematicModel {
    Prismatic(PrismaticModel),
    Revolute(RevoluteModel),
}

impl KinematicModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            KinematicModel::Prismatic(_) => ModelKind::Prismatic,
            KinematicModel::Revolute(_) => ModelKind::Revolute,
        }
    }

    /// Distance from a point to the model manifold, in meters.
    pub fn point_residual(&self, p: &Vec3) -> f64 {
        match self {
            KinematicModel::Prismatic(m) => {
                let rel = p - m.origin;
                (rel - rel.dot(&m.direction) * m.direction).norm()
            }
            KinematicModel::Revolute(m) => {
                let rel = p - m.center;
                let h = m.normal.dot(&rel);
                let rho = (rel - h * m.normal).norm();
                (h * h + (rho - m.radius) * (rho - m.radius)).sqrt()
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            KinematicModel::Prismatic(m) => format!(
                "prismatic origin ({:.4} {:.4} {:.4}) axis ({:.4} {:.4} {:.4})",
                m.origin.x, m.origin.y, m.origin.z, m.direction.x, m.direction.y, m.direction.z
            ),
            KinematicModel::Revolute(m) => format!(
                "revolute center ({:.4} {:.4} {:.4}) normal ({:.4} {:.4} {:.4}) radius {:.4}",
                m.center.x, m.center.y, m.center.z, m.normal.x, m.normal.y, m.normal.z, m.radius
            ),
        }
    }
}

/// Residual of an observed pose against a model. Translation only.
pub fn residual(model: &KinematicModel, d: &Pose) -> f64 {
    model.point_residual(&d.translation)
}

/// Ordered observation sequence with its source door class.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Pose>,
    pub door_class: DoorClass,
}

impl Trajectory {
    pub fn new(observations: Vec<Pose>, door_class: DoorClass) -> Self {
        Self { observations, door_class }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn translations(&self) -> Vec<Vec3> {
        self.observations.iter().map(|p| p.translation).collect()
    }

    /// Concatenation preserving observation order: `self` then `other`.
    pub fn union(&self, other: &Trajectory) -> Trajectory {
        let mut observations = self.observations.clone();
        observations.extend(other.observations.iter().cloned());
        Trajectory {
            observations,
            door_class: self.door_class,
        }
    }

    pub fn serialize(&self) -> String {
        let mut out = format!("TRAJ {} {}\n", self.door_class, self.observations.len());
        for pose in &self.observations {
            out.push_str(&pose.to_line());
            out.push('\n');
        }
        out
    }

    pub fn deserialize(text: &str, origin: &str) -> Result<Self, KinfitError> {
        let err = |line: usize, msg: String| KinfitError::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "TRAJ" {
            return Err(err(1, format!("expected 'TRAJ <class> <n>', got {header:?}")));
        }
        let door_class: DoorClass = fields[1].parse().map_err(|m| err(1, m))?;
        let n: usize = fields[2]
            .parse()
            .map_err(|_| err(1, format!("bad count {:?}", fields[2])))?;
        let mut observations = Vec::with_capacity(n);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let pose = Pose::from_line(line).map_err(|e| err(idx + 1, e.to_string()))?;
            observations.push(pose);
        }
        if observations.len() != n {
            return Err(err(1, format!("header says {n} poses, found {}", observations.len())));
        }
        Ok(Trajectory { observations, door_class })
    }

    pub fn save(&self, path: &Path) -> Result<(), KinfitError> {
        std::fs::write(path, self.serialize()).map_err(|e| KinfitError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, KinfitError> {
        let text = std::fs::read_to_string(path).map_err(|e| KinfitError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::deserialize(&text, &path.display().to_string())
    }
}

/// Line through `p1` toward `p2`.
pub fn fit_minimal_prismatic(p1: &Vec3, p2: &Vec3) -> Result<PrismaticModel, KinfitError> {
    let delta = p2 - p1;
    let norm = delta.norm();
    if norm < 1e-12 {
        return Err(KinfitError::CoincidentPoints);
    }
    Ok(PrismaticModel {
        origin: *p1,
        direction: delta / norm,
    })
}

/// Circumcircle of three points; the normal follows the traversal order
/// `p1 -> p2 -> p3` (right-handed).
pub fn fit_minimal_revolute(p1: &Vec3, p2: &Vec3, p3: &Vec3) -> Result<RevoluteModel, KinfitError> {
    let v1 = p2 - p1;
    let v2 = p3 - p1;
    let n = v1.cross(&v2);
    let n2 = n.norm_squared();
    if n2 < 1e-20 {
        return Err(KinfitError::CollinearPoints);
    }
    let center = p1 + (v1.norm_squared() * v2 - v2.norm_squared() * v1).cross(&n) / (2.0 * n2);
    let radius = (p1 - center).norm();
    if radius < 1e-12 {
        return Err(KinfitError::CollinearPoints);
    }
    Ok(RevoluteModel {
        center,
        normal: n / n2.sqrt(),
        radius,
    })
}

fn sum_squared_residuals(model: &KinematicModel, points: &[Vec3]) -> f64 {
    points.iter().map(|p| {
        let r = model.point_residual(p);
        r * r
    }).sum()
}

/// Total-least-squares line: centroid plus dominant principal direction.
fn refine_prismatic(model: &PrismaticModel, points: &[Vec3]) -> Result<PrismaticModel, KinfitError> {
    let mut centroid = Vec3::zeros();
    for p in points {
        centroid += p;
    }
    centroid /= points.len() as f64;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut max_idx = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] > eig.eigenvalues[max_idx] {
            max_idx = i;
        }
    }
    if eig.eigenvalues[max_idx] < 1e-18 {
        return Err(KinfitError::DegenerateInliers);
    }
    let mut direction = eig.eigenvectors.column(max_idx).into_owned().normalize();
    if direction.dot(&model.direction) < 0.0 {
        direction = -direction;
    }
    Ok(PrismaticModel { origin: centroid, direction })
}

/// Plane by total least squares, then an algebraic circle fit of the
/// in-plane projections polished by one Gauss-Newton step.
fn refine_revolute(model: &RevoluteModel, points: &[Vec3]) -> Result<RevoluteModel, KinfitError> {
    let mut centroid = Vec3::zeros();
    for p in points {
        centroid += p;
    }
    centroid /= points.len() as f64;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut min_idx = 0;
    let mut max_idx = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[max_idx] {
            max_idx = i;
        }
    }
    if eig.eigenvalues[max_idx] < 1e-18 {
        return Err(KinfitError::DegenerateInliers);
    }
    let mut normal = eig.eigenvectors.column(min_idx).into_owned().normalize();
    if normal.dot(&model.normal) < 0.0 {
        normal = -normal;
    }
    let (u_axis, v_axis) = crate::geometry::orthonormal_complement(&normal);

    // algebraic (Kasa) fit: minimize (x^2 + y^2 + D x + E y + F)^2
    let coords: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let d = p - centroid;
            (u_axis.dot(&d), v_axis.dot(&d))
        })
        .collect();
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut rhs = nalgebra::Vector3::<f64>::zeros();
    for &(x, y) in &coords {
        let row = nalgebra::Vector3::new(x, y, 1.0);
        m += row * row.transpose();
        rhs -= (x * x + y * y) * row;
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or(KinfitError::DegenerateInliers)?;
    let mut cx = -sol.x / 2.0;
    let mut cy = -sol.y / 2.0;
    let r2 = cx * cx + cy * cy - sol.z;
    if !r2.is_finite() || r2 <= 0.0 {
        return Err(KinfitError::DegenerateInliers);
    }
    let mut radius = r2.sqrt();

    // one Gauss-Newton step on the geometric distances d_i - r
    let mut jtj = nalgebra::Matrix3::<f64>::zeros();
    let mut jtr = nalgebra::Vector3::<f64>::zeros();
    let mut ok = true;
    for &(x, y) in &coords {
        let dx = x - cx;
        let dy = y - cy;
        let dist = (dx * dx + dy * dy).sqrt();
        if dist < 1e-12 {
            ok = false;
            break;
        }
        let jac = nalgebra::Vector3::new(-dx / dist, -dy / dist, -1.0);
        jtj += jac * jac.transpose();
        jtr += jac * (dist - radius);
    }
    if ok {
        if let Some(step) = jtj.lu().solve(&(-jtr)) {
            let (ncx, ncy, nr) = (cx + step.x, cy + step.y, radius + step.z);
            if nr.is_finite() && nr > 0.0 {
                cx = ncx;
                cy = ncy;
                radius = nr;
            }
        }
    }

    Ok(RevoluteModel {
        center: centroid + cx * u_axis + cy * v_axis,
        normal,
        radius,
    })
}

/// Consensus refinement. The returned model never has a larger residual
/// sum over `inliers` than the input model.
pub fn refine_on_inliers(
    model: &KinematicModel,
    inliers: &[Vec3],
) -> Result<KinematicModel, KinfitError> {
    if inliers.len() < model.kind().minimal_sample_size() {
        return Err(KinfitError::DegenerateInliers);
    }
    let refined = match model {
        KinematicModel::Prismatic(m) => KinematicModel::Prismatic(refine_prismatic(m, inliers)?),
        KinematicModel::Revolute(m) => KinematicModel::Revolute(refine_revolute(m, inliers)?),
    };
    if sum_squared_residuals(&refined, inliers) <= sum_squared_residuals(model, inliers) {
        Ok(refined)
    } else {
        Ok(*model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlesacConfig {
    /// Minimal-sample hypotheses drawn per model kind.
    pub hypotheses: usize,
    /// Inlier noise standard deviation in meters.
    pub sigma: f64,
    /// Support volume of the uniform outlier density; `None` uses the
    /// axis-aligned bounding box of the trajectory, floored at 1e-3.
    pub outlier_volume: Option<f64>,
    /// EM iterations for the mixture coefficient, starting from 0.5.
    pub em_steps: usize,
    pub seed: u64,
    /// Re-estimate sigma once from the winning consensus residuals
    /// (median absolute deviation x 1.4826).
    pub reestimate_sigma: bool,
}

impl Default for MlesacConfig {
    fn default() -> Self {
        Self {
            hypotheses: 200,
            sigma: 0.005,
            outlier_volume: None,
            em_steps: 10,
            seed: 0,
            reestimate_sigma: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: KinematicModel,
    pub log_likelihood: f64,
    /// Mixture coefficient (inlier prior probability).
    pub gamma: f64,
    pub inlier_flags: Vec<bool>,
    /// Inlier noise standard deviation used for the likelihood.
    pub sigma: f64,
}

impl FitResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_flags.iter().filter(|f| **f).count()
    }
}

/// Expectation-maximization over the mixture coefficient with fixed
/// component densities. `per_step_log_likelihood[i]` is the mixture
/// log-likelihood after the i-th gamma update; it is non-decreasing.
#[derive(Debug, Clone)]
pub struct EmTrace {
    pub gamma: f64,
    pub log_likelihood: f64,
    pub responsibilities: Vec<f64>,
    pub per_step_log_likelihood: Vec<f64>,
}

/// Run EM for the inlier/outlier mixture: Gaussian inliers with density
/// `phi_j`, uniform outliers with density `uniform`.
pub fn em_mixture(inlier_densities: &[f64], uniform: f64, steps: usize) -> EmTrace {
    let n = inlier_densities.len() as f64;
    let mut gamma = 0.5f64;
    let mut responsibilities = vec![0.0; inlier_densities.len()];
    let mut per_step = Vec::with_capacity(steps);
    let log_likelihood = |g: f64| -> f64 {
        inlier_densities
            .iter()
            .map(|phi| (g * phi + (1.0 - g) * uniform).ln())
            .sum()
    };
    for _ in 0..steps {
        let mut sum = 0.0;
        for (w, phi) in responsibilities.iter_mut().zip(inlier_densities) {
            let num = gamma * phi;
            *w = num / (num + (1.0 - gamma) * uniform);
            sum += *w;
        }
        gamma = (sum / n).clamp(1e-3, 1.0 - 1e-3);
        per_step.push(log_likelihood(gamma));
    }
    EmTrace {
        gamma,
        log_likelihood: log_likelihood(gamma),
        responsibilities,
        per_step_log_likelihood: per_step,
    }
}

fn gaussian_density(residual: f64, sigma: f64) -> f64 {
    let z = residual / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn bounding_box_volume(points: &[Vec3]) -> f64 {
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    ext.x * ext.y * ext.z
}

fn minimal_model(
    kind: ModelKind,
    points: &[Vec3],
    idx: &rand::seq::index::IndexVec,
) -> Result<KinematicModel, KinfitError> {
    match kind {
        ModelKind::Prismatic => Ok(KinematicModel::Prismatic(fit_minimal_prismatic(
            &points[idx.index(0)],
            &points[idx.index(1)],
        )?)),
        ModelKind::Revolute => Ok(KinematicModel::Revolute(fit_minimal_revolute(
            &points[idx.index(0)],
            &points[idx.index(1)],
            &points[idx.index(2)],
        )?)),
    }
}

fn score_model(
    model: &KinematicModel,
    points: &[Vec3],
    sigma: f64,
    uniform: f64,
    em_steps: usize,
) -> EmTrace {
    let densities: Vec<f64> = points
        .iter()
        .map(|p| gaussian_density(model.point_residual(p), sigma))
        .collect();
    em_mixture(&densities, uniform, em_steps)
}

/// MLESAC fit of one candidate model kind to a trajectory.
///
/// Hypotheses are scored by the mixture log-likelihood after EM on the
/// mixture coefficient; ties break to the lowest hypothesis index. The
/// winner is refined on the points with responsibility above 0.5.
pub fn mlesac_fit(
    traj: &Trajectory,
    kind: ModelKind,
    cfg: &MlesacConfig,
) -> Result<FitResult, KinfitError> {
    let points = traj.translations();
    let minimal = kind.minimal_sample_size();
    if points.len() < minimal {
        return Err(KinfitError::TooFewObservations {
            needed: minimal,
            got: points.len(),
        });
    }
    let mut sigma = cfg.sigma;
    let nu = cfg
        .outlier_volume
        .unwrap_or_else(|| bounding_box_volume(&points).max(1e-3));
    let uniform = 1.0 / nu;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, KinematicModel)> = None;
    let mut produced = 0usize;
    let mut attempts = 0usize;
    // degenerate samples are skipped without consuming the budget
    while produced < cfg.hypotheses && attempts < cfg.hypotheses * 50 {
        attempts += 1;
        let idx = rand::seq::index::sample(&mut rng, points.len(), minimal);
        let Ok(model) = minimal_model(kind, &points, &idx) else {
            continue;
        };
        produced += 1;
        let trace = score_model(&model, &points, sigma, uniform, cfg.em_steps);
        // strict improvement keeps the lowest hypothesis index on ties
        if best
            .as_ref()
            .map_or(true, |(ll, _)| trace.log_likelihood > *ll)
        {
            best = Some((trace.log_likelihood, model));
        }
    }
    let (_, mut model) = best.ok_or(KinfitError::DegenerateObservations)?;

    // consensus refinement on responsibilities > 0.5
    let trace = score_model(&model, &points, sigma, uniform, cfg.em_steps);
    let consensus: Vec<Vec3> = points
        .iter()
        .zip(&trace.responsibilities)
        .filter(|(_, w)| **w > 0.5)
        .map(|(p, _)| *p)
        .collect();
    if consensus.len() >= minimal {
        if let Ok(refined) = refine_on_inliers(&model, &consensus) {
            model = refined;
        }
    }

    if cfg.reestimate_sigma && !consensus.is_empty() {
        let mut residuals: Vec<f64> = consensus.iter().map(|p| model.point_residual(p)).collect();
        residuals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = residuals[residuals.len() / 2];
        let mut deviations: Vec<f64> = residuals.iter().map(|r| (r - median).abs()).collect();
        deviations.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mad = deviations[deviations.len() / 2];
        if mad * 1.4826 > 1e-6 {
            sigma = mad * 1.4826;
        }
    }

    let final_trace = score_model(&model, &points, sigma, uniform, cfg.em_steps);
    if final_trace.gamma < 0.05 {
        return Err(KinfitError::AllOutliers(final_trace.gamma));
    }
    Ok(FitResult {
        model,
        log_likelihood: final_trace.log_likelihood,
        gamma: final_trace.gamma,
        inlier_flags: final_trace
            .responsibilities
            .iter()
            .map(|w| *w > 0.5)
            .collect(),
        sigma,
    })
}
