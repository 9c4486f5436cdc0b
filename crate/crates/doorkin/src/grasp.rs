//! Grasp-pose estimation: from a point cloud and detection boxes to one
//! end-effector pose per handle.
//!
//! Per-box pipeline: door boxes are segmented, denoised, downsampled, and
//! given a RANSAC plane (normal oriented toward the sensor); handle boxes
//! are segmented and split from the door behind them, keeping the
//! protruding points and their centroid. Each handle is assigned to the
//! door plane it is closest to, the handle frame is built from that door's
//! normal and the centroid, and a configured offset yields the grasp pose.
//! Failures are per-handle and soft: one degenerate box never aborts the
//! others.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use thiserror::Error;

use crate::cloud::{
    centroid, ransac_plane, remove_statistical_outliers, roi_segment,
    split_handle_from_background, voxel_downsample, BoundingBox, CloudError, PointCloud,
};
use crate::geometry::{handle_transform, GeometryError, Pose, Vec3};
use crate::priors::fnv1a;

#[derive(Debug, Error, PartialEq)]
pub enum GraspError {
    #[error("no door planes available for assignment")]
    NoDoors,
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandleOrientation {
    Horizontal,
    Vertical,
}

impl fmt::Display for HandleOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HandleOrientation::Horizontal => f.write_str("horizontal"),
            HandleOrientation::Vertical => f.write_str("vertical"),
        }
    }
}

/// A fitted door plane in Hessian form, `normal . p + d = 0`, with the
/// normal oriented toward the sensor origin.
#[derive(Debug, Clone, PartialEq)]
pub struct DoorPlane {
    /// Index of the source box in the input box list.
    pub box_index: usize,
    pub normal: Vec3,
    pub d: f64,
}

/// One detected handle after segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct HandleDetection {
    pub orientation: HandleOrientation,
    pub centroid: Vec3,
    pub source_box: BoundingBox,
    pub assigned_door: Option<usize>,
}

/// Final grasp: the end-effector pose, the handle frame it derives from,
/// and the door (index into the door-plane list) the handle belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspPose {
    /// Index of the handle's box in the input box list.
    pub handle_index: usize,
    pub door_index: usize,
    pub pose: Pose,
    pub handle_pose: Pose,
    pub detection: HandleDetection,
}

/// A handle box that failed the pipeline, with its error.
#[derive(Debug, PartialEq)]
pub struct GraspFailure {
    pub handle_index: usize,
    pub error: GraspError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspConfig {
    pub k_neighbors: usize,
    pub alpha: f64,
    pub voxel_leaf: f64,
    pub plane_threshold: f64,
    pub ransac_iters: usize,
    pub seed: u64,
    /// Approach standoff: grasp translation along the handle frame x axis.
    pub standoff: f64,
    /// Roll about the handle frame x axis applied for vertical handles.
    pub vertical_roll: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 20,
            alpha: 1.0,
            voxel_leaf: 0.02,
            plane_threshold: 0.01,
            ransac_iters: 500,
            seed: 0,
            standoff: -0.05,
            vertical_roll: FRAC_PI_2,
        }
    }
}

/// Vertical iff the box is taller than wide; square boxes count as
/// horizontal (lever handles are predominantly horizontal).
pub fn classify_orientation(bbox: &BoundingBox) -> HandleOrientation {
    if bbox.height_px() > bbox.width_px() {
        HandleOrientation::Vertical
    } else {
        HandleOrientation::Horizontal
    }
}

/// Index of the door plane with the smallest absolute point-to-plane
/// distance; ties break to the lowest index.
pub fn assign_closest_door(handle_centroid: &Vec3, doors: &[DoorPlane]) -> Result<usize, GraspError> {
    if doors.is_empty() {
        return Err(GraspError::NoDoors);
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, door) in doors.iter().enumerate() {
        let dist = (door.normal.dot(handle_centroid) + door.d).abs();
        if dist < best_dist {
            best = i;
            best_dist = dist;
        }
    }
    Ok(best)
}

/// RANSAC seed derived from the box content, not its list position, so
/// adding or removing unrelated boxes leaves a box's pipeline unchanged.
fn box_seed(base: u64, bbox: &BoundingBox) -> u64 {
    let key = format!(
        "{} {} {} {} {}",
        bbox.class, bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max
    );
    base ^ fnv1a(key.as_bytes())
}

fn fit_door_plane(
    cloud: &PointCloud,
    bbox: &BoundingBox,
    box_index: usize,
    cfg: &GraspConfig,
) -> Result<DoorPlane, GraspError> {
    let roi = roi_segment(cloud, bbox)?;
    if roi.is_empty() {
        return Err(GraspError::Cloud(CloudError::EmptyRoi));
    }
    let points = cloud.points_at(&roi);
    let denoised = remove_statistical_outliers(&points, cfg.k_neighbors, cfg.alpha)?;
    let downsampled = voxel_downsample(&denoised, cfg.voxel_leaf);
    let plane = ransac_plane(
        &downsampled,
        cfg.plane_threshold,
        cfg.ransac_iters,
        box_seed(cfg.seed, bbox),
    )?;
    Ok(DoorPlane {
        box_index,
        normal: plane.normal,
        d: plane.d,
    })
}

fn handle_grasp(
    cloud: &PointCloud,
    bbox: &BoundingBox,
    doors: &[DoorPlane],
    cfg: &GraspConfig,
) -> Result<(GraspPose, usize), GraspError> {
    let roi = roi_segment(cloud, bbox)?;
    if roi.is_empty() {
        return Err(GraspError::Cloud(CloudError::EmptyRoi));
    }
    let points = cloud.points_at(&roi);
    let handle_points =
        split_handle_from_background(&points, cfg.plane_threshold, box_seed(cfg.seed, bbox))?;
    let handle_centroid = centroid(&handle_points)?;
    let door_index = assign_closest_door(&handle_centroid, doors)?;
    let orientation = classify_orientation(bbox);
    let handle_pose = handle_transform(doors[door_index].normal, handle_centroid)?;
    let roll = match orientation {
        HandleOrientation::Horizontal => 0.0,
        HandleOrientation::Vertical => cfg.vertical_roll,
    };
    let offset = Pose::new(
        Pose::from_axis_angle(Vec3::x(), roll).rotation,
        Vec3::new(cfg.standoff, 0.0, 0.0),
    );
    let pose = handle_pose.compose(&offset);
    let detection = HandleDetection {
        orientation,
        centroid: handle_centroid,
        source_box: bbox.clone(),
        assigned_door: Some(door_index),
    };
    Ok((
        GraspPose {
            handle_index: 0, // filled by the caller
            door_index,
            pose,
            handle_pose,
            detection,
        },
        door_index,
    ))
}

/// Run the full pipeline. Returns the grasps that succeeded (ordered by
/// input box index), the fitted door planes, and the per-handle failures.
pub fn estimate_grasp_poses(
    cloud: &PointCloud,
    boxes: &[BoundingBox],
    cfg: &GraspConfig,
) -> (Vec<GraspPose>, Vec<DoorPlane>, Vec<GraspFailure>) {
    let mut doors = Vec::new();
    for (i, bbox) in boxes.iter().enumerate() {
        if bbox.class.is_door() {
            if let Ok(plane) = fit_door_plane(cloud, bbox, i, cfg) {
                doors.push(plane);
            }
        }
    }
    let mut grasps = Vec::new();
    let mut failures = Vec::new();
    for (i, bbox) in boxes.iter().enumerate() {
        if bbox.class.is_door() {
            continue;
        }
        match handle_grasp(cloud, bbox, &doors, cfg) {
            Ok((mut grasp, _)) => {
                grasp.handle_index = i;
                grasp.detection.assigned_door = Some(grasp.door_index);
                grasps.push(grasp);
            }
            Err(error) => failures.push(GraspFailure {
                handle_index: i,
                error,
            }),
        }
    }
    (grasps, doors, failures)
}

/// One line per grasp: `handle_idx door_idx tx ty tz qx qy qz qw`.
pub fn grasp_report(grasps: &[GraspPose]) -> String {
    let mut out = String::new();
    for g in grasps {
        out.push_str(&format!(
            "{} {} {}\n",
            g.handle_index,
            g.door_index,
            g.pose.to_line()
        ));
    }
    out
}
