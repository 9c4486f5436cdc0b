//! Organized point-cloud ingestion and filtering.
//!
//! The pipeline stages here mirror the grasp front end: region-of-interest
//! cropping by detection box, statistical outlier removal over k-nearest
//! neighbor mean distances, voxel-grid downsampling by per-voxel centroid,
//! and seeded RANSAC plane extraction in Hessian normal form.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{fmt_f64, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("no valid points inside the region of interest")]
    EmptyRoi,
    #[error("box ({0}, {1})-({2}, {3}) exceeds cloud bounds {4}x{5}")]
    BoxOutOfBounds(usize, usize, usize, usize, usize, usize),
    #[error("need more than {k} points for a {k}-neighbor filter, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("need at least 3 non-collinear points to fit a plane")]
    DegenerateInput,
    #[error("empty point set")]
    EmptyInput,
    #[error("plane fit left no outliers; handle indistinguishable from the door")]
    NoOutliers,
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Detection classes produced by the upstream object detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectClass {
    Door,
    CabinetDoor,
    RefrigeratorDoor,
    Handle,
}

impl ObjectClass {
    pub fn is_door(&self) -> bool {
        !matches!(self, ObjectClass::Handle)
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObjectClass::Door => "door",
            ObjectClass::CabinetDoor => "cabinet_door",
            ObjectClass::RefrigeratorDoor => "refrigerator_door",
            ObjectClass::Handle => "handle",
        };
        f.write_str(s)
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "door" => Ok(ObjectClass::Door),
            "cabinet_door" => Ok(ObjectClass::CabinetDoor),
            "refrigerator_door" => Ok(ObjectClass::RefrigeratorDoor),
            "handle" => Ok(ObjectClass::Handle),
            other => Err(format!("unknown object class {other:?}")),
        }
    }
}

/// Detection rectangle in pixel coordinates, inclusive corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub class: ObjectClass,
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
    pub confidence: f64,
}

impl BoundingBox {
    pub fn width_px(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height_px(&self) -> usize {
        self.y_max - self.y_min + 1
    }
}

/// Organized 3D point set: index `j` of pixel `(x, y)` is `width * y + x`.
/// Invalid depth pixels are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Option<Vec3>>,
}

impl PointCloud {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            points: vec![None; width * height],
        }
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        self.width * y + x
    }

    pub fn get(&self, x: usize, y: usize) -> Option<Vec3> {
        self.points[self.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, p: Vec3) {
        let j = self.index(x, y);
        self.points[j] = Some(p);
    }

    /// Materialize the points behind an index list.
    pub fn points_at(&self, indices: &[usize]) -> Vec<Vec3> {
        indices.iter().filter_map(|&j| self.points[j]).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), CloudError> {
        let mut out = String::with_capacity(self.points.len() * 24);
        out.push_str(&format!("OPC {} {}\n", self.width, self.height));
        for p in &self.points {
            match p {
                Some(v) => {
                    out.push_str(&fmt_f64(v.x));
                    out.push(' ');
                    out.push_str(&fmt_f64(v.y));
                    out.push(' ');
                    out.push_str(&fmt_f64(v.z));
                    out.push('\n');
                }
                None => out.push_str("nan nan nan\n"),
            }
        }
        std::fs::write(path, out).map_err(|e| CloudError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CloudError> {
        let text = std::fs::read_to_string(path).map_err(|e| CloudError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let name = path.display().to_string();
        let parse_err = |line: usize, msg: String| CloudError::Parse {
            path: name.clone(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "OPC" {
            return Err(parse_err(1, format!("expected 'OPC <width> <height>', got {header:?}")));
        }
        let width: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(1, format!("bad width {:?}", fields[1])))?;
        let height: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(1, format!("bad height {:?}", fields[2])))?;
        let mut cloud = PointCloud::new(width, height);
        let mut count = 0usize;
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if count >= width * height {
                return Err(parse_err(idx + 1, "more points than width*height".into()));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(idx + 1, format!("expected 3 fields, got {}", fields.len())));
            }
            if fields == ["nan", "nan", "nan"] {
                cloud.points[count] = None;
            } else {
                let mut v = [0.0f64; 3];
                for (slot, text) in v.iter_mut().zip(&fields) {
                    *slot = text
                        .parse()
                        .map_err(|_| parse_err(idx + 1, format!("bad number {text:?}")))?;
                }
                cloud.points[count] = Some(Vec3::new(v[0], v[1], v[2]));
            }
            count += 1;
        }
        if count != width * height {
            return Err(parse_err(
                text.lines().count(),
                format!("expected {} points, got {count}", width * height),
            ));
        }
        Ok(cloud)
    }
}

/// Parse a `.boxes` file: one `class x_min y_min x_max y_max confidence` per line.
pub fn load_boxes(path: &Path) -> Result<Vec<BoundingBox>, CloudError> {
    let text = std::fs::read_to_string(path).map_err(|e| CloudError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let name = path.display().to_string();
    let mut boxes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| CloudError::Parse {
            path: name.clone(),
            line: idx + 1,
            msg,
        };
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", fields.len())));
        }
        let class: ObjectClass = fields[0].parse().map_err(err)?;
        let mut px = [0usize; 4];
        for (slot, text) in px.iter_mut().zip(&fields[1..5]) {
            *slot = text
                .parse()
                .map_err(|_| err(format!("bad pixel coordinate {text:?}")))?;
        }
        let confidence: f64 = fields[5]
            .parse()
            .map_err(|_| err(format!("bad confidence {:?}", fields[5])))?;
        if px[0] > px[2] || px[1] > px[3] {
            return Err(err("box corners out of order".into()));
        }
        boxes.push(BoundingBox {
            class,
            x_min: px[0],
            y_min: px[1],
            x_max: px[2],
            y_max: px[3],
            confidence,
        });
    }
    Ok(boxes)
}

pub fn save_boxes(boxes: &[BoundingBox], path: &Path) -> Result<(), CloudError> {
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            b.class,
            b.x_min,
            b.y_min,
            b.x_max,
            b.y_max,
            fmt_f64(b.confidence)
        ));
    }
    std::fs::write(path, out).map_err(|e| CloudError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Indices (into `cloud.points`) of the valid points inside `bbox`.
pub fn roi_segment(cloud: &PointCloud, bbox: &BoundingBox) -> Result<Vec<usize>, CloudError> {
    if bbox.x_max >= cloud.width || bbox.y_max >= cloud.height {
        return Err(CloudError::BoxOutOfBounds(
            bbox.x_min,
            bbox.y_min,
            bbox.x_max,
            bbox.y_max,
            cloud.width,
            cloud.height,
        ));
    }
    let mut indices = Vec::new();
    for y in bbox.y_min..=bbox.y_max {
        for x in bbox.x_min..=bbox.x_max {
            let j = cloud.index(x, y);
            if cloud.points[j].is_some() {
                indices.push(j);
            }
        }
    }
    if indices.is_empty() {
        return Err(CloudError::EmptyRoi);
    }
    Ok(indices)
}

/// Exact k-nearest-neighbor mean distances over a uniform cell grid.
fn mean_knn_distances(points: &[Vec3], k: usize) -> Vec<f64> {
    let n = points.len();
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).max().max(1e-9);
    let cell = extent / (n as f64).cbrt().ceil().max(1.0);
    let key = |p: &Vec3| {
        (
            ((p.x - lo.x) / cell).floor() as i64,
            ((p.y - lo.y) / cell).floor() as i64,
            ((p.z - lo.z) / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }

    let mut result = vec![0.0f64; n];
    // max-heap of squared distances to the current k best neighbors
    let mut heap: Vec<f64> = Vec::with_capacity(k + 1);
    for (i, p) in points.iter().enumerate() {
        heap.clear();
        let (cx, cy, cz) = key(p);
        let mut ring = 0i64;
        loop {
            // visit cells on the Chebyshev shell at distance `ring`
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &j in bucket {
                            if j == i {
                                continue;
                            }
                            let d2 = (points[j] - p).norm_squared();
                            if heap.len() < k {
                                heap.push(d2);
                                if heap.len() == k {
                                    heap.sort_by(|a, b| b.partial_cmp(a).unwrap());
                                }
                            } else if d2 < heap[0] {
                                heap[0] = d2;
                                let mut m = 0;
                                while m + 1 < heap.len() && heap[m] < heap[m + 1] {
                                    heap.swap(m, m + 1);
                                    m += 1;
                                }
                            }
                        }
                    }
                }
            }
            // points in shells beyond `ring` are at least `ring * cell` away
            let bound = ring as f64 * cell;
            if heap.len() == k && heap[0] <= bound * bound {
                break;
            }
            ring += 1;
            if ring > 2 * (extent / cell) as i64 + 2 && heap.len() == k {
                break;
            }
        }
        let sum: f64 = heap.iter().map(|d2| d2.sqrt()).sum();
        result[i] = sum / k as f64;
    }
    result
}

/// Retain points whose mean distance to their `k_neighbors` nearest
/// neighbors lies within `mean +/- alpha * stddev` of the cloud-wide
/// distribution.
pub fn remove_statistical_outliers(
    points: &[Vec3],
    k_neighbors: usize,
    alpha: f64,
) -> Result<Vec<Vec3>, CloudError> {
    if k_neighbors < 1 || points.len() <= k_neighbors {
        return Err(CloudError::TooFewPoints {
            n: points.len(),
            k: k_neighbors,
        });
    }
    let r = mean_knn_distances(points, k_neighbors);
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    // small slack so identical-distance clouds survive alpha = 0
    let band = alpha * sd + 1e-12;
    Ok(points
        .iter()
        .zip(&r)
        .filter(|(_, rj)| (**rj - mean).abs() <= band)
        .map(|(p, _)| *p)
        .collect())
}

/// One output point per occupied voxel: the arithmetic centroid of its
/// members. Output ordered by voxel key for determinism.
pub fn voxel_downsample(points: &[Vec3], leaf: f64) -> Vec<Vec3> {
    assert!(leaf > 0.0, "voxel leaf size must be positive");
    let mut voxels: HashMap<(i64, i64, i64), (Vec3, usize)> = HashMap::new();
    for p in points {
        let k = (
            (p.x / leaf).floor() as i64,
            (p.y / leaf).floor() as i64,
            (p.z / leaf).floor() as i64,
        );
        let entry = voxels.entry(k).or_insert((Vec3::zeros(), 0));
        entry.0 += p;
        entry.1 += 1;
    }
    let mut keys: Vec<_> = voxels.keys().copied().collect();
    keys.sort_unstable();
    keys.iter()
        .map(|k| {
            let (sum, count) = voxels[k];
            sum / count as f64
        })
        .collect()
}

/// Plane in Hessian normal form `n . p + d = 0` with its RANSAC partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    pub normal: Vec3,
    pub d: f64,
    pub inlier_indices: Vec<usize>,
    pub outlier_indices: Vec<usize>,
}

impl PlaneModel {
    pub fn distance(&self, p: &Vec3) -> f64 {
        (self.normal.dot(p) + self.d).abs()
    }
}

fn plane_from_triplet(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<(Vec3, f64)> {
    let n = (b - a).cross(&(c - a));
    let norm = n.norm();
    if norm < 1e-12 {
        return None;
    }
    let n = n / norm;
    Some((n, -n.dot(a)))
}

/// Total-least-squares plane: centroid + smallest covariance eigenvector.
fn fit_plane_tls(points: &[Vec3], indices: &[usize]) -> Option<(Vec3, f64)> {
    if indices.len() < 3 {
        return None;
    }
    let mut centroid = Vec3::zeros();
    for &i in indices {
        centroid += points[i];
    }
    centroid /= indices.len() as f64;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for &i in indices {
        let d = points[i] - centroid;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut min_idx = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    // collinear input: two near-zero eigenvalues, the normal is undefined
    let mut sorted = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[1] < 1e-18 * sorted[2].max(1.0) {
        return None;
    }
    let n = eig.eigenvectors.column(min_idx).into_owned();
    let n = n / n.norm();
    Some((n, -n.dot(&centroid)))
}

/// Seeded RANSAC plane fit with total-least-squares refinement on the
/// winning consensus set. The normal is oriented toward the sensor origin
/// (`d >= 0`).
pub fn ransac_plane(
    points: &[Vec3],
    dist_threshold: f64,
    max_iters: usize,
    seed: u64,
) -> Result<PlaneModel, CloudError> {
    if points.len() < 3 {
        return Err(CloudError::DegenerateInput);
    }
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vec3, f64)> = None; // (count, normal, d)
    let mut produced = 0usize;
    let mut attempts = 0usize;
    while produced < max_iters && attempts < max_iters * 10 {
        attempts += 1;
        let idx = rand::seq::index::sample(&mut rng, n, 3.min(n));
        let Some((normal, d)) =
            plane_from_triplet(&points[idx.index(0)], &points[idx.index(1)], &points[idx.index(2)])
        else {
            continue;
        };
        produced += 1;
        let count = points
            .iter()
            .filter(|p| (normal.dot(p) + d).abs() <= dist_threshold)
            .count();
        if best.as_ref().map_or(true, |(c, _, _)| count > *c) {
            best = Some((count, normal, d));
        }
        // early exit on an overwhelming consensus
        if count as f64 / n as f64 > 0.9 {
            break;
        }
    }
    let (_, mut normal, mut d) = best.ok_or(CloudError::DegenerateInput)?;

    let inliers: Vec<usize> = (0..n)
        .filter(|&i| (normal.dot(&points[i]) + d).abs() <= dist_threshold)
        .collect();
    if let Some((rn, rd)) = fit_plane_tls(points, &inliers) {
        normal = rn;
        d = rd;
    }
    if d < 0.0 {
        normal = -normal;
        d = -d;
    }
    let mut inlier_indices = Vec::new();
    let mut outlier_indices = Vec::new();
    for i in 0..n {
        if (normal.dot(&points[i]) + d).abs() <= dist_threshold {
            inlier_indices.push(i);
        } else {
            outlier_indices.push(i);
        }
    }
    if inlier_indices.len() < 3 {
        return Err(CloudError::DegenerateInput);
    }
    Ok(PlaneModel {
        normal,
        d,
        inlier_indices,
        outlier_indices,
    })
}

/// Component-wise arithmetic mean.
pub fn centroid(points: &[Vec3]) -> Result<Vec3, CloudError> {
    if points.is_empty() {
        return Err(CloudError::EmptyInput);
    }
    let mut sum = Vec3::zeros();
    for p in points {
        sum += p;
    }
    Ok(sum / points.len() as f64)
}

/// Fit the door plane behind a handle region and return the protruding
/// RANSAC outlier subset (the handle itself).
pub fn split_handle_from_background(
    roi_points: &[Vec3],
    dist_threshold: f64,
    seed: u64,
) -> Result<Vec<Vec3>, CloudError> {
    let plane = ransac_plane(roi_points, dist_threshold, 500, seed)?;
    if plane.outlier_indices.is_empty() {
        return Err(CloudError::NoOutliers);
    }
    Ok(plane
        .outlier_indices
        .iter()
        .map(|&i| roi_points[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_cloud(w: usize, h: usize, spacing: f64) -> Vec<Vec3> {
        let mut points = Vec::new();
        for y in 0..h {
            for x in 0..w {
                points.push(Vec3::new(x as f64 * spacing, y as f64 * spacing, 0.0));
            }
        }
        points
    }

    /// brute-force r_j oracle for the statistical filter
    fn brute_force_knn_mean(points: &[Vec3], k: usize) -> Vec<f64> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| (q - p).norm())
                    .collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                d[..k].iter().sum::<f64>() / k as f64
            })
            .collect()
    }

    #[test]
    fn roi_index_arithmetic() {
        let mut cloud = PointCloud::new(640, 480);
        cloud.set(10, 2, Vec3::new(1.0, 2.0, 3.0));
        let bbox = BoundingBox {
            class: ObjectClass::Handle,
            x_min: 10,
            y_min: 2,
            x_max: 10,
            y_max: 2,
            confidence: 1.0,
        };
        assert_eq!(roi_segment(&cloud, &bbox).unwrap(), vec![1290]);
    }

    #[test]
    fn roi_small_cloud_enumeration() {
        // 4x4 cloud, box (1,1)-(2,2): hand enumeration gives {5, 6, 9, 10}
        let mut cloud = PointCloud::new(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                cloud.set(x, y, Vec3::new(x as f64, y as f64, 0.0));
            }
        }
        let bbox = BoundingBox {
            class: ObjectClass::Door,
            x_min: 1,
            y_min: 1,
            x_max: 2,
            y_max: 2,
            confidence: 1.0,
        };
        assert_eq!(roi_segment(&cloud, &bbox).unwrap(), vec![5, 6, 9, 10]);
    }

    #[test]
    fn roi_full_image_and_empty() {
        let mut cloud = PointCloud::new(3, 3);
        cloud.set(0, 0, Vec3::zeros());
        cloud.set(2, 2, Vec3::new(1.0, 1.0, 1.0));
        let full = BoundingBox {
            class: ObjectClass::Door,
            x_min: 0,
            y_min: 0,
            x_max: 2,
            y_max: 2,
            confidence: 1.0,
        };
        assert_eq!(roi_segment(&cloud, &full).unwrap().len(), 2);
        let empty = BoundingBox {
            x_min: 1,
            y_min: 0,
            x_max: 1,
            y_max: 1,
            ..full
        };
        assert_eq!(roi_segment(&cloud, &empty), Err(CloudError::EmptyRoi));
    }

    #[test]
    fn roi_is_idempotent() {
        let mut cloud = PointCloud::new(8, 8);
        for y in 0..8 {
            for x in 0..8 {
                if (x + y) % 3 != 0 {
                    cloud.set(x, y, Vec3::new(x as f64, y as f64, 1.0));
                }
            }
        }
        let bbox = BoundingBox {
            class: ObjectClass::Door,
            x_min: 2,
            y_min: 1,
            x_max: 6,
            y_max: 5,
            confidence: 0.9,
        };
        let once = roi_segment(&cloud, &bbox).unwrap();
        let twice = roi_segment(&cloud, &bbox).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn statistical_filter_removes_far_point() {
        let mut points = grid_cloud(10, 10, 1.0);
        points.push(Vec3::new(20.0, 20.0, 0.0)); // 10 grid spacings away
        let kept = remove_statistical_outliers(&points, 20, 1.0).unwrap();
        assert_eq!(kept.len(), 100);
        assert!(kept.iter().all(|p| p.x < 15.0));
    }

    #[test]
    fn statistical_filter_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let points: Vec<Vec3> = (0..200)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-0.2..0.2),
                )
            })
            .collect();
        let fast = mean_knn_distances(&points, 12);
        let slow = brute_force_knn_mean(&points, 12);
        for (a, b) in fast.iter().zip(&slow) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn statistical_filter_identical_distances_retained() {
        // unit square corners: every point has the same neighbor distances
        let points = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let kept = remove_statistical_outliers(&points, 2, 0.0).unwrap();
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn statistical_filter_large_alpha_keeps_all() {
        let points = grid_cloud(6, 6, 0.5);
        let kept = remove_statistical_outliers(&points, 4, 100.0).unwrap();
        assert_eq!(kept.len(), points.len());
    }

    #[test]
    fn statistical_filter_too_few_points() {
        let points = grid_cloud(2, 2, 1.0);
        assert!(matches!(
            remove_statistical_outliers(&points, 10, 1.0),
            Err(CloudError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn statistical_filter_monotone_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<Vec3> = (0..150)
            .map(|_| Vec3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), 0.0))
            .collect();
        let once = remove_statistical_outliers(&points, 8, 1.0).unwrap();
        assert!(once.len() <= points.len());
        let twice = remove_statistical_outliers(&once, 8, 1.0).unwrap();
        assert!(twice.len() <= once.len());
    }

    #[test]
    fn voxel_mean_of_two_points() {
        let points = vec![Vec3::zeros(), Vec3::new(0.2, 0.0, 0.0)];
        let down = voxel_downsample(&points, 1.0);
        assert_eq!(down.len(), 1);
        assert_abs_diff_eq!(down[0], Vec3::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn voxel_singletons_pass_through() {
        let points = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 2.0, 2.0),
            Vec3::new(-3.0, 4.0, 1.0),
        ];
        let mut down = voxel_downsample(&points, 0.5);
        down.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
        let mut expected = points.clone();
        expected.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
        assert_eq!(down, expected);
    }

    #[test]
    fn voxel_cube_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let points: Vec<Vec3> = (0..1000)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        let down = voxel_downsample(&points, 0.25);
        assert!(down.len() <= 64);
        let before = centroid(&points).unwrap();
        let after = centroid(&down).unwrap();
        // centroid drifts a little because voxels have unequal occupancy
        assert!((before - after).norm() < 0.05);
    }

    #[test]
    fn ransac_noiseless_plane() {
        let mut points = Vec::new();
        for x in 0..10 {
            for y in 0..10 {
                points.push(Vec3::new(x as f64 * 0.1, y as f64 * 0.1, 0.0));
            }
        }
        let plane = ransac_plane(&points, 0.01, 500, 1).unwrap();
        assert!(plane.normal.z.abs() > 1.0 - 1e-9);
        assert!(plane.d.abs() <= 1e-9);
        assert_eq!(plane.inlier_indices.len(), points.len());
    }

    #[test]
    fn ransac_minimal_three_points() {
        let points = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let plane = ransac_plane(&points, 0.01, 50, 3).unwrap();
        assert!(plane.normal.z.abs() > 1.0 - 1e-9);
        assert!(plane.d.abs() < 1e-12);
    }

    #[test]
    fn ransac_rejects_collinear() {
        let points: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(
            ransac_plane(&points, 0.01, 100, 7),
            Err(CloudError::DegenerateInput)
        );
    }

    #[test]
    fn ransac_noisy_plane_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut points = Vec::new();
        let mut true_inliers = Vec::new();
        for _ in 0..700 {
            let x = rng.gen_range(-0.5..0.5);
            let y = rng.gen_range(-0.5..0.5);
            let z = rng.gen_range(-1.0..1.0) * 0.003 * 1.7; // approx gaussian scale
            points.push(Vec3::new(x, y, z + 1.0)); // plane z = 1 so the sign convention bites
            true_inliers.push(points.len() - 1);
        }
        for _ in 0..300 {
            points.push(Vec3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.0..2.0),
            ));
        }
        let plane = ransac_plane(&points, 0.01, 500, 99).unwrap();
        // oracle: total-least-squares on the known inliers
        let tls = fit_plane_tls(&points, &true_inliers).unwrap();
        let cos = plane.normal.dot(&tls.0).abs();
        assert!(cos > (2.0f64).to_radians().cos(), "normal off by {} deg", cos.acos().to_degrees());
        // oriented toward the origin: for the plane z = 1 that means -z
        assert!(plane.normal.z < 0.0);
        assert!(plane.d >= 0.0);
    }

    #[test]
    fn ransac_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let points: Vec<Vec3> = (0..200)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-0.01..0.01),
                )
            })
            .collect();
        let a = ransac_plane(&points, 0.02, 300, 5).unwrap();
        let b = ransac_plane(&points, 0.02, 300, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn centroid_cases() {
        assert_eq!(
            centroid(&[Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)]).unwrap(),
            Vec3::new(1.0, 0.0, 0.0)
        );
        let p = Vec3::new(0.3, -0.2, 5.0);
        assert_eq!(centroid(&[p]).unwrap(), p);
        let cube: Vec<Vec3> = (0..8)
            .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        assert_abs_diff_eq!(centroid(&cube).unwrap(), Vec3::new(0.5, 0.5, 0.5));
        assert_eq!(centroid(&[]), Err(CloudError::EmptyInput));
    }

    #[test]
    fn split_handle_returns_protrusion() {
        let mut points = Vec::new();
        for i in 0..200 {
            let x = (i % 20) as f64 * 0.02;
            let y = (i / 20) as f64 * 0.02;
            points.push(Vec3::new(x, y, 0.0));
        }
        for i in 0..30 {
            points.push(Vec3::new(0.2 + (i % 6) as f64 * 0.005, 0.1, 0.04));
        }
        let handle = split_handle_from_background(&points, 0.01, 21).unwrap();
        assert_eq!(handle.len(), 30);
        assert!(handle.iter().all(|p| (p.z - 0.04).abs() < 1e-9));
    }

    #[test]
    fn split_handle_all_planar_errors() {
        let points = grid_cloud(10, 10, 0.02);
        assert_eq!(
            split_handle_from_background(&points, 0.01, 4),
            Err(CloudError::NoOutliers)
        );
    }

    #[test]
    fn split_handle_symmetric_protrusion() {
        let mut points = grid_cloud(15, 15, 0.02);
        for i in 0..10 {
            points.push(Vec3::new(0.1 + i as f64 * 0.005, 0.1, 0.05));
            points.push(Vec3::new(0.1 + i as f64 * 0.005, 0.14, -0.05));
        }
        let handle = split_handle_from_background(&points, 0.01, 2).unwrap();
        assert_eq!(handle.len(), 20);
    }

    #[test]
    fn opc_round_trip() {
        let mut cloud = PointCloud::new(3, 2);
        cloud.set(0, 0, Vec3::new(0.1, 0.2, 0.3));
        cloud.set(2, 1, Vec3::new(-1.5, 0.0, 2.25));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.opc");
        cloud.save(&path).unwrap();
        let loaded = PointCloud::load(&path).unwrap();
        assert_eq!(cloud, loaded);
    }

    #[test]
    fn opc_malformed_header_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.opc");
        std::fs::write(&path, "PCL 3 2\n").unwrap();
        match PointCloud::load(&path) {
            Err(CloudError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn boxes_round_trip() {
        let boxes = vec![
            BoundingBox {
                class: ObjectClass::Door,
                x_min: 1,
                y_min: 2,
                x_max: 30,
                y_max: 40,
                confidence: 0.875,
            },
            BoundingBox {
                class: ObjectClass::Handle,
                x_min: 10,
                y_min: 20,
                x_max: 14,
                y_max: 22,
                confidence: 0.5,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.boxes");
        save_boxes(&boxes, &path).unwrap();
        assert_eq!(load_boxes(&path).unwrap(), boxes);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// mass conservation: sum of (centroid * count) equals the input sum
        #[test]
        fn voxel_mass_conservation(seed in 0u64..500, leaf in 0.05f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<Vec3> = (0..rng.gen_range(1..300))
                .map(|_| Vec3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ))
                .collect();
            let mut voxels: HashMap<(i64, i64, i64), usize> = HashMap::new();
            for p in &points {
                *voxels.entry((
                    (p.x / leaf).floor() as i64,
                    (p.y / leaf).floor() as i64,
                    (p.z / leaf).floor() as i64,
                )).or_default() += 1;
            }
            let down = voxel_downsample(&points, leaf);
            prop_assert_eq!(down.len(), voxels.len());
            let mut keys: Vec<_> = voxels.keys().copied().collect();
            keys.sort_unstable();
            let weighted: Vec3 = down.iter().zip(&keys)
                .map(|(c, k)| c * voxels[k] as f64)
                .sum();
            let input_sum: Vec3 = points.iter().sum();
            prop_assert!((weighted - input_sum).norm() <= 1e-9 * points.len() as f64);
        }
    }
}
