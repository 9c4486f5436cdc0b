//! Task Space Region constraints generated from fitted door models.
//!
//! A TSR is a frame `t_o_w`, an end-effector offset `t_w_e`, and six
//! per-axis displacement intervals (x, y, z in meters; roll, pitch, yaw in
//! radians). A pose `P` belongs to the region iff the displacement
//! `t_o_w^-1 * P * t_w_e^-1` stays inside the bounds.
//!
//! Frame layout: for a prismatic door the TSR frame sits at the grasp with
//! its z-axis along the negative opening direction, so the single free
//! interval is z in [-d, 0]. For a revolute door the frame sits at the
//! rotation center with its x-axis along the hinge normal, so the single
//! free interval is roll in [-phi, 0]. The in-plane orientation of the
//! remaining axes is fixed by a deterministic orthonormal completion; any
//! in-plane rotation would describe the same constraint set.

use nalgebra::Matrix3;
use thiserror::Error;

use crate::geometry::{orthonormal_complement, Interval, Pose, Vec3};
use crate::kinfit::{PrismaticModel, RevoluteModel};

#[derive(Debug, Error, PartialEq)]
pub enum TsrError {
    #[error("prismatic TSR needs travel d > 0, got {0}")]
    NonpositiveTravel(f64),
    #[error("revolute TSR needs sweep phi > 0, got {0}")]
    NonpositiveSweep(f64),
    #[error("roll-pitch-yaw extraction singular: pitch = {0:.9} rad")]
    RPYSingularity(f64),
}

/// Task Space Region: frame, end-effector offset, and displacement bounds
/// ordered x, y, z, roll, pitch, yaw.
#[derive(Debug, Clone, PartialEq)]
pub struct TSRSpec {
    pub t_o_w: Pose,
    pub t_w_e: Pose,
    pub bounds: [Interval; 6],
}

impl TSRSpec {
    /// Number of intervals with nonzero width or offset.
    pub fn nonzero_bounds(&self) -> usize {
        self.bounds
            .iter()
            .filter(|b| b.lo != 0.0 || b.hi != 0.0)
            .count()
    }
}

/// Rotation from roll-pitch-yaw angles: `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rpy_to_rotation(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let rx = Pose::from_axis_angle(Vec3::x(), roll).rotation;
    let ry = Pose::from_axis_angle(Vec3::y(), pitch).rotation;
    let rz = Pose::from_axis_angle(Vec3::z(), yaw).rotation;
    rz * ry * rx
}

/// Roll-pitch-yaw angles of a rotation, `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rotation_to_rpy(r: &Matrix3<f64>) -> Result<(f64, f64, f64), TsrError> {
    let sin_pitch = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sin_pitch.asin();
    if (pitch.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-6 {
        return Err(TsrError::RPYSingularity(pitch));
    }
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    Ok((roll, pitch, yaw))
}

/// TSR for a prismatic door with remaining travel `d`, anchored at the
/// current grasp: z-axis along `-e`, bounds zero except z in [-d, 0].
pub fn tsr_from_prismatic(
    model: &PrismaticModel,
    d: f64,
    grasp: &Pose,
) -> Result<TSRSpec, TsrError> {
    if d <= 0.0 {
        return Err(TsrError::NonpositiveTravel(d));
    }
    let z = -model.direction;
    let (x, y) = orthonormal_complement(&z);
    // (z, x, y) is right-handed, so [x | y | z] is a proper rotation
    let t_o_w = Pose::new(Matrix3::from_columns(&[x, y, z]), grasp.translation);
    let t_w_e = t_o_w.inverse().compose(grasp);
    let mut bounds = [Interval::zero(); 6];
    bounds[2] = Interval::new(-d, 0.0);
    Ok(TSRSpec { t_o_w, t_w_e, bounds })
}

/// TSR for a revolute door with remaining sweep `phi`, anchored at the
/// rotation center: x-axis along the hinge normal `n`, bounds zero except
/// roll in [-phi, 0].
pub fn tsr_from_revolute(
    model: &RevoluteModel,
    phi: f64,
    grasp: &Pose,
) -> Result<TSRSpec, TsrError> {
    if phi <= 0.0 {
        return Err(TsrError::NonpositiveSweep(phi));
    }
    let x = model.normal;
    let (y, z) = orthonormal_complement(&x);
    let t_o_w = Pose::new(Matrix3::from_columns(&[x, y, z]), model.center);
    let t_w_e = t_o_w.inverse().compose(grasp);
    let mut bounds = [Interval::zero(); 6];
    bounds[3] = Interval::new(-phi, 0.0);
    Ok(TSRSpec { t_o_w, t_w_e, bounds })
}

/// End-effector pose at an explicit displacement (x, y, z, roll, pitch,
/// yaw) inside the TSR frame.
pub fn tsr_pose_at(spec: &TSRSpec, displacement: &[f64; 6]) -> Pose {
    let delta = Pose::new(
        rpy_to_rotation(displacement[3], displacement[4], displacement[5]),
        Vec3::new(displacement[0], displacement[1], displacement[2]),
    );
    spec.t_o_w.compose(&delta).compose(&spec.t_w_e)
}

/// Membership test: true iff the displacement of `pose` in the TSR frame
/// lies within every bound, each widened by `tol`.
pub fn tsr_contains(spec: &TSRSpec, pose: &Pose, tol: f64) -> Result<bool, TsrError> {
    let delta = spec
        .t_o_w
        .inverse()
        .compose(pose)
        .compose(&spec.t_w_e.inverse());
    let (roll, pitch, yaw) = rotation_to_rpy(&delta.rotation)?;
    let values = [
        delta.translation.x,
        delta.translation.y,
        delta.translation.z,
        roll,
        pitch,
        yaw,
    ];
    Ok(spec
        .bounds
        .iter()
        .zip(&values)
        .all(|(b, v)| b.contains(*v, tol)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinfit::KinematicModel;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prismatic_fixture() -> (PrismaticModel, Pose) {
        let model = PrismaticModel {
            origin: Vec3::new(1.5, 0.2, 1.0),
            direction: Vec3::new(-1.0, 0.2, 0.1).normalize(),
        };
        let grasp = Pose::new(
            Pose::from_axis_angle(Vec3::z(), 0.4).rotation,
            model.origin + 0.1 * model.direction,
        );
        (model, grasp)
    }

    fn revolute_fixture() -> (RevoluteModel, Pose) {
        let model = RevoluteModel {
            center: Vec3::new(1.5, -0.4, 1.0),
            normal: Vec3::new(0.1, -0.05, 1.0).normalize(),
            radius: 0.9,
        };
        let (u, _) = orthonormal_complement(&model.normal);
        let grasp = Pose::new(
            Pose::from_axis_angle(Vec3::y(), -0.3).rotation,
            model.center + model.radius * u,
        );
        (model, grasp)
    }

    #[test]
    fn prismatic_bound_pattern() {
        let (model, grasp) = prismatic_fixture();
        let spec = tsr_from_prismatic(&model, 0.3, &grasp).unwrap();
        assert_eq!(spec.bounds[2], Interval::new(-0.3, 0.0));
        for (i, b) in spec.bounds.iter().enumerate() {
            if i != 2 {
                assert_eq!(*b, Interval::zero());
            }
        }
        assert_eq!(spec.nonzero_bounds(), 1);
        // frame z-axis is the negative opening direction
        assert_abs_diff_eq!(
            spec.t_o_w.rotation.column(2).into_owned(),
            -model.direction,
            epsilon = 1e-12
        );
    }

    #[test]
    fn revolute_bound_pattern() {
        let (model, grasp) = revolute_fixture();
        let spec = tsr_from_revolute(&model, std::f64::consts::FRAC_PI_2, &grasp).unwrap();
        assert_eq!(
            spec.bounds[3],
            Interval::new(-std::f64::consts::FRAC_PI_2, 0.0)
        );
        assert_eq!(spec.nonzero_bounds(), 1);
        assert_abs_diff_eq!(
            spec.t_o_w.rotation.column(0).into_owned(),
            model.normal,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(spec.t_o_w.translation, model.center, epsilon = 1e-12);
    }

    #[test]
    fn nonpositive_parameters_rejected() {
        let (pm, pg) = prismatic_fixture();
        assert!(matches!(
            tsr_from_prismatic(&pm, 0.0, &pg),
            Err(TsrError::NonpositiveTravel(_))
        ));
        assert!(matches!(
            tsr_from_prismatic(&pm, -0.1, &pg),
            Err(TsrError::NonpositiveTravel(_))
        ));
        let (rm, rg) = revolute_fixture();
        assert!(matches!(
            tsr_from_revolute(&rm, 0.0, &rg),
            Err(TsrError::NonpositiveSweep(_))
        ));
    }

    #[test]
    fn rpy_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let roll = rng.gen_range(-3.0..3.0);
            let pitch = rng.gen_range(-1.4..1.4);
            let yaw = rng.gen_range(-3.0..3.0);
            let r = rpy_to_rotation(roll, pitch, yaw);
            let (r2, p2, y2) = rotation_to_rpy(&r).unwrap();
            assert_abs_diff_eq!(roll, r2, epsilon = 1e-9);
            assert_abs_diff_eq!(pitch, p2, epsilon = 1e-9);
            assert_abs_diff_eq!(yaw, y2, epsilon = 1e-9);
        }
    }

    #[test]
    fn rpy_singularity_flagged() {
        let r = rpy_to_rotation(0.3, std::f64::consts::FRAC_PI_2, -0.7);
        assert!(matches!(
            rotation_to_rpy(&r),
            Err(TsrError::RPYSingularity(_))
        ));
    }

    #[test]
    fn anchor_pose_is_contained() {
        let (model, grasp) = prismatic_fixture();
        let spec = tsr_from_prismatic(&model, 0.3, &grasp).unwrap();
        assert!(tsr_contains(&spec, &grasp, 1e-9).unwrap());
        let (model, grasp) = revolute_fixture();
        let spec = tsr_from_revolute(&model, 1.0, &grasp).unwrap();
        assert!(tsr_contains(&spec, &grasp, 1e-9).unwrap());
    }

    #[test]
    fn prismatic_membership_cases() {
        let (model, grasp) = prismatic_fixture();
        let spec = tsr_from_prismatic(&model, 0.3, &grasp).unwrap();
        let inside = tsr_pose_at(&spec, &[0.0, 0.0, -0.15, 0.0, 0.0, 0.0]);
        assert!(tsr_contains(&spec, &inside, 1e-9).unwrap());
        let outside = tsr_pose_at(&spec, &[0.0, 0.0, -0.31, 0.0, 0.0, 0.0]);
        assert!(!tsr_contains(&spec, &outside, 1e-3).unwrap());
    }

    #[test]
    fn prismatic_samples_lie_on_manifold() {
        let (model, grasp) = prismatic_fixture();
        let spec = tsr_from_prismatic(&model, 0.3, &grasp).unwrap();
        let kin = KinematicModel::Prismatic(model);
        for i in 0..100 {
            let z = -0.3 * i as f64 / 99.0;
            let pose = tsr_pose_at(&spec, &[0.0, 0.0, z, 0.0, 0.0, 0.0]);
            assert!(kin.point_residual(&pose.translation) <= 1e-6);
            assert!(tsr_contains(&spec, &pose, 1e-9).unwrap());
        }
    }

    #[test]
    fn revolute_samples_lie_on_manifold() {
        let (model, grasp) = revolute_fixture();
        let phi = 1.2;
        let spec = tsr_from_revolute(&model, phi, &grasp).unwrap();
        let kin = KinematicModel::Revolute(model);
        for i in 0..100 {
            let roll = -phi * i as f64 / 99.0;
            let pose = tsr_pose_at(&spec, &[0.0, 0.0, 0.0, roll, 0.0, 0.0]);
            assert!(
                kin.point_residual(&pose.translation) <= 1e-6,
                "residual {} at roll {roll}",
                kin.point_residual(&pose.translation)
            );
            assert!(tsr_contains(&spec, &pose, 1e-9).unwrap());
        }
    }

    #[test]
    fn sweeping_the_model_parameter_stays_inside() {
        // poses produced by moving the true door, not by TSR sampling,
        // must still test as members
        let (model, grasp) = revolute_fixture();
        let spec = tsr_from_revolute(&model, 1.0, &grasp).unwrap();
        for i in 0..50 {
            let angle = -1.0 * i as f64 / 49.0;
            let rot = Pose::from_axis_angle(model.normal, angle);
            // rotate the grasp about the hinge axis through the center
            let pose = Pose::new(
                rot.rotation * grasp.rotation,
                model.center + rot.rotation * (grasp.translation - model.center),
            );
            assert!(tsr_contains(&spec, &pose, 1e-9).unwrap(), "angle {angle}");
        }
    }

    #[test]
    fn equivariance_under_rigid_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let (model, grasp) = revolute_fixture();
            let axis = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let axis = if axis.norm() < 1e-6 { Vec3::x() } else { axis };
            let mut t = Pose::from_axis_angle(axis, rng.gen_range(-2.0..2.0));
            t.translation = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let moved_model = RevoluteModel {
                center: t.transform_point(&model.center),
                normal: t.rotation * model.normal,
                radius: model.radius,
            };
            let moved_grasp = t.compose(&grasp);
            let spec = tsr_from_revolute(&model, 1.0, &grasp).unwrap();
            let moved_spec = tsr_from_revolute(&moved_model, 1.0, &moved_grasp).unwrap();
            for i in 0..20 {
                let roll = -1.0 * i as f64 / 19.0;
                let pose = tsr_pose_at(&spec, &[0.0, 0.0, 0.0, roll, 0.0, 0.0]);
                let moved_pose = t.compose(&pose);
                assert!(tsr_contains(&moved_spec, &moved_pose, 1e-9).unwrap());
            }
        }
    }
}
