//! Rigid-body math: frames, transforms, and the handle pose construction.
//!
//! The handle frame is built from the door plane normal `a` and the handle
//! centroid `O`: the first rotation column is the door normal itself, the
//! second is the horizontal direction orthogonal to it, and the third
//! completes a right-handed basis. Poses serialize as one line of seven
//! numbers, `tx ty tz qx qy qz qw` (unit quaternion, scalar last).

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// Door normal aligned with the world z axis; the horizontal second
    /// column of the handle frame is undefined.
    #[error("degenerate door normal: a_x^2 + a_y^2 = {0:.3e} < 1e-9")]
    DegenerateNormal(f64),
    #[error("pose line must contain 7 numbers, found {0} fields")]
    MalformedPose(usize),
    #[error("unparseable number {text:?}")]
    BadNumber { text: String },
}

/// Closed interval, `lo <= hi`. Translation rows are in meters, rotation
/// rows in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval requires lo <= hi");
        Self { lo, hi }
    }

    pub fn zero() -> Self {
        Self { lo: 0.0, hi: 0.0 }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

/// Rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (unit), centered at the origin.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self {
            rotation: rot.into_inner(),
            translation: Vec3::zeros(),
        }
    }

    /// `self` applied first, then `other` expressed in `self`'s frame:
    /// `T_w^g = T_w^h * T_h^g`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Serialize as `tx ty tz qx qy qz qw` with round-trip precision.
    pub fn to_line(&self) -> String {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.rotation,
        ));
        let c = q.coords; // (x, y, z, w)
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            c.x,
            c.y,
            c.z,
            c.w,
        ]
        .iter()
        .map(|v| fmt_f64(*v))
        .collect::<Vec<_>>()
        .join(" ")
    }

    pub fn from_line(line: &str) -> Result<Pose, GeometryError> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(GeometryError::MalformedPose(fields.len()));
        }
        let mut v = [0.0f64; 7];
        for (slot, text) in v.iter_mut().zip(&fields) {
            *slot = text
                .parse()
                .map_err(|_| GeometryError::BadNumber { text: text.to_string() })?;
        }
        let q = UnitQuaternion::new_normalize(Quaternion::new(v[6], v[3], v[4], v[5]));
        Ok(Pose {
            rotation: q.to_rotation_matrix().into_inner(),
            translation: Vec3::new(v[0], v[1], v[2]),
        })
    }
}

/// Handle frame from the unit door normal `a` and handle centroid `origin`.
///
/// The rotation is `[a | u | a x u]` with `u = (a_y, -a_x, 0) / sqrt(a_x^2 + a_y^2)`,
/// so the first axis is the door normal and the second axis is horizontal.
pub fn handle_transform(a: Vec3, origin: Vec3) -> Result<Pose, GeometryError> {
    let planar = a.x * a.x + a.y * a.y;
    if planar < 1e-9 {
        return Err(GeometryError::DegenerateNormal(planar));
    }
    let u = Vec3::new(a.y, -a.x, 0.0) / planar.sqrt();
    let w = a.cross(&u);
    Ok(Pose {
        rotation: Matrix3::from_columns(&[a, u, w]),
        translation: origin,
    })
}

/// Geodesic angle of a rotation matrix, in `[0, pi]`.
///
/// Extracted through the quaternion form; unlike acos of the trace this
/// stays accurate near zero angle.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r)).angle()
}

/// `(translation distance in meters, geodesic rotation angle in radians)`.
pub fn pose_distance(p1: &Pose, p2: &Pose) -> (f64, f64) {
    let dt = (p1.translation - p2.translation).norm();
    let dr = rotation_angle(&(p1.rotation.transpose() * p2.rotation));
    (dt, dr)
}

/// Deterministic orthonormal completion: two unit vectors orthogonal to
/// `axis` (unit) and to each other, right-handed as `(axis, u, v)`.
pub fn orthonormal_complement(axis: &Vec3) -> (Vec3, Vec3) {
    let reference = if axis.x.abs() <= axis.y.abs() && axis.x.abs() <= axis.z.abs() {
        Vec3::x()
    } else if axis.y.abs() <= axis.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let u = axis.cross(&reference).normalize();
    let v = axis.cross(&u);
    (u, v)
}

/// Format with at least 9 decimal places, adding digits until the printed
/// text parses back to the exact same f64.
pub(crate) fn fmt_f64(v: f64) -> String {
    for prec in 9..=22 {
        let s = format!("{v:.prec$}");
        if s.parse::<f64>() == Ok(v) {
            return s;
        }
    }
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_rotation_valid(r: &Matrix3<f64>) {
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        assert!(err < 1e-9, "R^T R - I = {err}");
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-9);
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let axis = if axis.norm() < 1e-6 { Vec3::x() } else { axis };
        let angle = rng.gen_range(-3.0..3.0);
        let t = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mut p = Pose::from_axis_angle(axis, angle);
        p.translation = t;
        p
    }

    #[test]
    fn handle_transform_x_normal() {
        let p = handle_transform(Vec3::new(1.0, 0.0, 0.0), Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(p.rotation.column(0).into_owned(), Vec3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(p.rotation.column(1).into_owned(), Vec3::new(0.0, -1.0, 0.0));
        assert_abs_diff_eq!(p.rotation.column(2).into_owned(), Vec3::new(0.0, 0.0, -1.0));
        assert_abs_diff_eq!(p.translation, Vec3::zeros());
    }

    #[test]
    fn handle_transform_y_normal() {
        let p = handle_transform(Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_abs_diff_eq!(p.translation, Vec3::new(1.0, 2.0, 3.0));
        assert_abs_diff_eq!(p.rotation.column(0).into_owned(), Vec3::new(0.0, 1.0, 0.0));
        assert_rotation_valid(&p.rotation);
    }

    #[test]
    fn handle_transform_tilted_normal_second_column() {
        // normalize (a_y, -a_x, 0): brute-force oracle for a = (0.6, 0.8, 0)
        let a = Vec3::new(0.6, 0.8, 0.0);
        let raw = Vec3::new(a.y, -a.x, 0.0);
        let expected = raw / raw.norm();
        let p = handle_transform(a, Vec3::zeros()).unwrap();
        assert_abs_diff_eq!(p.rotation.column(1).into_owned(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(
            p.rotation.column(1).into_owned(),
            Vec3::new(0.8, -0.6, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn handle_transform_rejects_vertical_normal() {
        assert!(matches!(
            handle_transform(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros()),
            Err(GeometryError::DegenerateNormal(_))
        ));
    }

    #[test]
    fn handle_transform_rotations_are_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.9..0.9),
            );
            if a.norm() < 1e-3 {
                continue;
            }
            let a = a.normalize();
            if a.x * a.x + a.y * a.y < 1e-9 {
                continue;
            }
            let p = handle_transform(a, Vec3::zeros()).unwrap();
            assert_rotation_valid(&p.rotation);
            // first column copied exactly
            assert_eq!(p.rotation.column(0).into_owned(), a);
        }
    }

    #[test]
    fn compose_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pose(&mut rng);
        let id = Pose::identity();
        let (dt, dr) = pose_distance(&id.compose(&p), &p);
        assert!(dt < 1e-12 && dr < 1e-9);
        let (dt, dr) = pose_distance(&p.compose(&p.inverse()), &id);
        assert!(dt < 1e-9 && dr < 1e-9);
    }

    #[test]
    fn compose_handle_with_standoff() {
        // hand oracle: 4x4 homogeneous multiply of the handle frame with a
        // pure translation of (-0.05, 0, 0)
        let a = Vec3::new(0.6, 0.8, 0.0);
        let handle = handle_transform(a, Vec3::new(1.0, -0.5, 1.2)).unwrap();
        let offset = Pose::from_translation(Vec3::new(-0.05, 0.0, 0.0));
        let grasp = handle.compose(&offset);
        let expected = handle.translation - 0.05 * a;
        assert_abs_diff_eq!(grasp.translation, expected, epsilon = 1e-12);
        assert_eq!(grasp.rotation, handle.rotation);
    }

    #[test]
    fn pose_distance_cases() {
        let id = Pose::identity();
        assert_eq!(pose_distance(&id, &id), (0.0, 0.0));
        let rot = Pose::from_axis_angle(Vec3::z(), std::f64::consts::FRAC_PI_2);
        let (dt, dr) = pose_distance(&id, &rot);
        assert_abs_diff_eq!(dt, 0.0);
        assert_abs_diff_eq!(dr, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        let trans = Pose::from_translation(Vec3::new(3.0, 4.0, 0.0));
        let (dt, dr) = pose_distance(&id, &trans);
        assert_abs_diff_eq!(dt, 5.0);
        assert_abs_diff_eq!(dr, 0.0);
    }

    #[test]
    fn pose_line_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_pose(&mut rng);
            let q = Pose::from_line(&p.to_line()).unwrap();
            let (dt, dr) = pose_distance(&p, &q);
            assert!(dt < 1e-9 && dr < 1e-9);
        }
    }

    #[test]
    fn pose_line_rejects_bad_input() {
        assert!(matches!(
            Pose::from_line("1 2 3"),
            Err(GeometryError::MalformedPose(3))
        ));
        assert!(matches!(
            Pose::from_line("1 2 3 4 5 6 x"),
            Err(GeometryError::BadNumber { .. })
        ));
    }

    proptest! {
        #[test]
        fn compose_is_associative(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            let (dt, dr) = pose_distance(&lhs, &rhs);
            prop_assert!(dt < 1e-9 && dr < 1e-9);
        }

        #[test]
        fn pose_distance_symmetric_triangle(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            let ab = pose_distance(&a, &b);
            let ba = pose_distance(&b, &a);
            prop_assert!((ab.0 - ba.0).abs() < 1e-9 && (ab.1 - ba.1).abs() < 1e-9);
            let ac = pose_distance(&a, &c);
            let cb = pose_distance(&c, &b);
            prop_assert!(ab.0 <= ac.0 + cb.0 + 1e-9);
            prop_assert!(ab.1 <= ac.1 + cb.1 + 1e-9);
        }
    }
}
