//! Camera poses, trajectories and the camera-accuracy metrics.
//!
//! Conventions used throughout the crate: right-handed world, `+y` up, the
//! camera looks down its local `-z` axis with `+x` to the right. Poses are
//! world-to-camera extrinsics `x_cam = R * x_world + t`, so the camera centre
//! (eye) satisfies `t = -R * eye`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormality and determinant tolerance for rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_FRAME_COUNT: usize = 77;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rotation about the world `+y` axis by `angle` radians.
pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation about the `+x` axis by `angle` radians.
pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Camera-to-world rotation of a camera with the given yaw and pitch (radians).
///
/// Positive yaw turns the view toward increasing panorama longitude (to the
/// right when looking down `-z`); positive pitch looks up.
pub fn yaw_pitch_to_world(yaw: f64, pitch: f64) -> Mat3 {
    rot_y(-yaw) * rot_x(pitch)
}

/// Returns `‖RᵀR − I‖_∞` and `det R`.
fn rotation_defect(r: &Mat3) -> (f64, f64) {
    let e = r.transpose() * r - Mat3::identity();
    (e.amax(), r.determinant())
}

pub fn check_rotation(r: &Mat3) -> Result<()> {
    let (orth, det) = rotation_defect(r);
    if !(orth < ROTATION_TOLERANCE) || !((det - 1.0).abs() < ROTATION_TOLERANCE) {
        return Err(Error::NotARotation(orth.max((det - 1.0).abs())));
    }
    Ok(())
}

/// World-to-camera extrinsics of a single frame.
///
/// Serializes as the 12-element row-major flattening of `[R|t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 12]", try_from = "[f64; 12]")]
pub struct CameraPose {
    rotation: Mat3,
    translation: Vec3,
}

impl CameraPose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Pose of a camera at `eye` whose camera-to-world rotation is `cam_to_world`.
    pub fn from_eye(cam_to_world: Mat3, eye: Vec3) -> Result<Self> {
        let rotation = cam_to_world.transpose();
        Self::new(rotation, -(rotation * eye))
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Camera centre in world coordinates.
    pub fn eye(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Viewing direction (camera `-z`) in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose() * -1.0
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.row(0).transpose()
    }

    pub fn up(&self) -> Vec3 {
        self.rotation.row(1).transpose()
    }

    /// Panorama longitude (radians) of the viewing direction.
    pub fn yaw(&self) -> f64 {
        let f = self.forward();
        f.x.atan2(-f.z)
    }

    pub fn pitch(&self) -> f64 {
        self.forward().y.clamp(-1.0, 1.0).asin()
    }

    /// World-space direction of a camera-frame vector.
    pub fn to_world_dir(&self, v: &Vec3) -> Vec3 {
        self.rotation.transpose() * v
    }

    pub fn matrix(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.set_column(3, &self.translation);
        m
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> CameraPose {
        let rt = self.rotation.transpose();
        CameraPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Row-major flattening of `[R|t]`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> Result<Self> {
        let rotation = Mat3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self::new(rotation, Vec3::new(v[3], v[7], v[11]))
    }
}

impl From<CameraPose> for [f64; 12] {
    fn from(p: CameraPose) -> Self {
        p.to_row_major()
    }
}

impl TryFrom<[f64; 12]> for CameraPose {
    type Error = Error;

    fn try_from(v: [f64; 12]) -> Result<Self> {
        CameraPose::from_row_major(&v)
    }
}

/// Camera at `eye` looking at `target`.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<CameraPose> {
    let dir = target - eye;
    let dist = dir.norm();
    if !(dist > 1e-9) {
        return Err(Error::DegenerateLookAt("target coincides with eye"));
    }
    let forward = dir / dist;
    let right = forward.cross(&up);
    let rn = right.norm();
    if !(rn > 1e-9 * up.norm().max(1e-300)) || up.norm() < 1e-12 {
        return Err(Error::DegenerateLookAt("up is parallel to the viewing direction"));
    }
    let right = right / rn;
    let cam_up = right.cross(&forward);
    // Rows are the camera axes expressed in world coordinates.
    let rotation = Mat3::from_rows(&[
        right.transpose(),
        cam_up.transpose(),
        (-forward).transpose(),
    ]);
    CameraPose::new(rotation, -(rotation * eye))
}

/// Geodesic distance on SO(3), in radians.
pub fn geodesic_angle(r1: &Mat3, r2: &Mat3) -> Result<f64> {
    check_rotation(r1)?;
    check_rotation(r2)?;
    Ok(geodesic_angle_unchecked(r1, r2))
}

/// `arccos((tr(R1 R2ᵀ) − 1)/2)`, evaluated as `atan2(sin, cos)` with the sine
/// taken from the skew part so that small angles keep full precision.
pub(crate) fn geodesic_angle_unchecked(r1: &Mat3, r2: &Mat3) -> f64 {
    let m = r1 * r2.transpose();
    let c = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let skew = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    (skew.norm() / 2.0).atan2(c)
}

/// An ordered list of per-frame camera poses (at least two).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<CameraPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<CameraPose>) -> Result<Self> {
        if poses.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "a trajectory needs at least 2 frames, got {}",
                poses.len()
            )));
        }
        Ok(Self { poses })
    }

    /// `frames` copies of `pose`.
    pub fn constant(pose: CameraPose, frames: usize) -> Result<Self> {
        Self::new(vec![pose; frames])
    }

    pub fn poses(&self) -> &[CameraPose] {
        &self.poses
    }

    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    pub fn first(&self) -> &CameraPose {
        &self.poses[0]
    }

    pub fn into_poses(self) -> Vec<CameraPose> {
        self.poses
    }

    /// Sum of camera-centre displacements between consecutive frames.
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].eye() - w[0].eye()).norm())
            .sum()
    }

    /// Re-express the trajectory in a new world frame: `world_to_new` is applied
    /// to every camera's world coordinates (equivalently, every camera-to-world
    /// pose is left-multiplied by it).
    pub fn change_world_frame(&self, world_to_new: &CameraPose) -> Trajectory {
        let new_to_world = world_to_new.inverse();
        Trajectory {
            poses: self.poses.iter().map(|p| p.compose(&new_to_world)).collect(),
        }
    }

    /// Writes the trajectory file (see [`Trajectory::to_file_string`]).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_str(&text).map_err(|e| match e {
            Error::Format(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// JSON document holding one 12-element row-major `[R|t]` row per frame,
    /// every number printed with 17 significant digits.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        let _ = writeln!(out, "  \"format_version\": {TRAJECTORY_FORMAT_VERSION},");
        out.push_str("  \"convention\": \"world_to_camera_3x4_row_major\",\n");
        let _ = writeln!(out, "  \"frame_count\": {},", self.poses.len());
        out.push_str("  \"poses\": [\n");
        for (i, pose) in self.poses.iter().enumerate() {
            out.push_str("    [");
            for (j, v) in pose.to_row_major().iter().enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push(']');
            if i + 1 < self.poses.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn from_file_str(text: &str) -> Result<Self> {
        let doc: TrajectoryDoc =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if doc.format_version != TRAJECTORY_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported trajectory format version {}",
                doc.format_version
            )));
        }
        if doc.frame_count != doc.poses.len() {
            return Err(Error::Format(format!(
                "frame_count {} but {} poses",
                doc.frame_count,
                doc.poses.len()
            )));
        }
        let poses = doc
            .poses
            .iter()
            .map(CameraPose::from_row_major)
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(poses)
    }
}

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;

#[derive(Deserialize)]
struct TrajectoryDoc {
    format_version: u32,
    #[allow(dead_code)]
    #[serde(default)]
    convention: Option<String>,
    frame_count: usize,
    poses: Vec<[f64; 12]>,
}

/// Replaces every frame by the relative transform from frame 0 to it, so the
/// first frame becomes the identity.
pub fn normalize_trajectory(traj: &Trajectory) -> Trajectory {
    let first = traj.poses[0];
    if first.rotation == Mat3::identity() && first.translation == Vec3::zeros() {
        return traj.clone();
    }
    let inv = first.inverse();
    let mut poses: Vec<CameraPose> = traj.poses.iter().map(|p| p.compose(&inv)).collect();
    poses[0] = CameraPose::identity();
    Trajectory { poses }
}

/// Summed per-frame camera errors between two trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    /// Sum of geodesic rotation errors, degrees.
    pub rot_err: f64,
    /// Sum of translation L2 errors.
    pub trans_err: f64,
    /// Sum of Frobenius norms of the `[R|t]` differences.
    pub cam_mc: f64,
}

/// How translations are scaled before TransErr and CamMC are accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationScale {
    /// Raw world units.
    #[default]
    Raw,
    /// Divide both trajectories' translations by the reference path length
    /// (left unscaled when that length is zero).
    ReferencePathLength,
    /// Divide by a fixed scene scale.
    Fixed(f64),
}

pub fn pose_error(gen: &Trajectory, gt: &Trajectory) -> Result<PoseError> {
    pose_error_scaled(gen, gt, TranslationScale::Raw)
}

pub fn pose_error_scaled(
    gen: &Trajectory,
    gt: &Trajectory,
    scale: TranslationScale,
) -> Result<PoseError> {
    if gen.frame_count() != gt.frame_count() {
        return Err(Error::LengthMismatch {
            left: gen.frame_count(),
            right: gt.frame_count(),
        });
    }
    let inv_scale = match scale {
        TranslationScale::Raw => 1.0,
        TranslationScale::ReferencePathLength => {
            let l = gt.path_length();
            if l > 0.0 {
                1.0 / l
            } else {
                1.0
            }
        }
        TranslationScale::Fixed(s) => {
            if !(s > 0.0) {
                return Err(Error::Config(format!("translation scale must be positive, got {s}")));
            }
            1.0 / s
        }
    };
    let mut err = PoseError {
        rot_err: 0.0,
        trans_err: 0.0,
        cam_mc: 0.0,
    };
    for (a, b) in gen.poses.iter().zip(&gt.poses) {
        err.rot_err += geodesic_angle_unchecked(&a.rotation, &b.rotation).to_degrees();
        let dt = (a.translation - b.translation) * inv_scale;
        err.trans_err += dt.norm();
        let mut diff = a.matrix() - b.matrix();
        diff.set_column(3, &dt);
        err.cam_mc += diff.norm();
    }
    Ok(err)
}

/// Rotation angle via unit quaternions, independent of the trace formula.
pub fn quaternion_angle(r1: &Mat3, r2: &Mat3) -> f64 {
    let q1 = UnitQuaternion::from_matrix(r1);
    let q2 = UnitQuaternion::from_matrix(r2);
    let d = q1.coords.dot(&q2.coords).abs().min(1.0);
    2.0 * d.acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        // Uniform quaternion (Shoemake).
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let tau = std::f64::consts::TAU;
        let q = nalgebra::Quaternion::new(
            u1.sqrt() * (tau * u3).cos(),
            (1.0 - u1).sqrt() * (tau * u2).sin(),
            (1.0 - u1).sqrt() * (tau * u2).cos(),
            u1.sqrt() * (tau * u3).sin(),
        );
        *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> CameraPose {
        let t = Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        CameraPose::new(random_rotation(rng), t).unwrap()
    }

    fn random_trajectory(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
        Trajectory::new((0..n).map(|_| random_pose(rng)).collect()).unwrap()
    }

    #[test]
    fn look_at_canonical_frame_is_identity() {
        let p = look_at(Vec3::zeros(), Vec3::new(0.0, 0.0, -1.0), Vec3::y()).unwrap();
        assert_eq!(*p.rotation(), Mat3::identity());
        assert_eq!(*p.translation(), Vec3::zeros());
    }

    #[test]
    fn look_at_translation_is_minus_r_eye() {
        let p = look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), Vec3::y()).unwrap();
        assert_abs_diff_eq!(*p.rotation(), Mat3::identity(), epsilon = 1e-15);
        assert_abs_diff_eq!(*p.translation(), Vec3::new(0.0, 0.0, -5.0), epsilon = 1e-15);
    }

    #[test]
    fn look_at_maps_view_direction_to_minus_z() {
        let p = look_at(Vec3::new(1.0, 0.0, 0.0), Vec3::zeros(), Vec3::y()).unwrap();
        let img = p.rotation() * Vec3::new(-1.0, 0.0, 0.0);
        assert_abs_diff_eq!(img, Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(p.eye(), Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn look_at_rejects_degenerate_input() {
        assert!(matches!(
            look_at(Vec3::zeros(), Vec3::zeros(), Vec3::y()),
            Err(Error::DegenerateLookAt(_))
        ));
        assert!(matches!(
            look_at(Vec3::zeros(), Vec3::new(0.0, 3.0, 0.0), Vec3::y()),
            Err(Error::DegenerateLookAt(_))
        ));
    }

    #[test]
    fn geodesic_angle_basic_values() {
        let i = Mat3::identity();
        assert_eq!(geodesic_angle(&i, &i).unwrap(), 0.0);
        let a = geodesic_angle(&i, &rot_y(std::f64::consts::FRAC_PI_2)).unwrap();
        assert_abs_diff_eq!(a, std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn geodesic_angle_rejects_non_rotations() {
        let mut m = Mat3::identity();
        m[(0, 0)] = 2.0;
        assert!(matches!(geodesic_angle(&m, &Mat3::identity()), Err(Error::NotARotation(_))));
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(geodesic_angle(&reflect, &Mat3::identity()).is_err());
    }

    #[test]
    fn geodesic_angle_matches_quaternion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let g = geodesic_angle(&a, &b).unwrap();
            assert!((g - quaternion_angle(&a, &b)).abs() < 1e-9);
        }
    }

    #[test]
    fn geodesic_angle_is_a_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let c = random_rotation(&mut rng);
            let ab = geodesic_angle(&a, &b).unwrap();
            assert!((ab - geodesic_angle(&b, &a).unwrap()).abs() < 1e-12);
            let ac = geodesic_angle(&a, &c).unwrap();
            let cb = geodesic_angle(&c, &b).unwrap();
            assert!(ab <= ac + cb + 1e-9);
        }
    }

    #[test]
    fn pose_error_single_frame_yaw() {
        let gt = Trajectory::constant(CameraPose::identity(), 77).unwrap();
        let mut poses = gt.poses().to_vec();
        poses[40] = CameraPose::new(rot_y(10f64.to_radians()), Vec3::zeros()).unwrap();
        let gen = Trajectory::new(poses).unwrap();
        let e = pose_error(&gen, &gt).unwrap();
        assert!((e.rot_err - 10.0).abs() < 1e-6, "{e:?}");
        assert_eq!(e.trans_err, 0.0);
        assert!(e.cam_mc > 0.0);
    }

    #[test]
    fn pose_error_translation_is_linear() {
        let gt = Trajectory::constant(CameraPose::identity(), 5).unwrap();
        let offsets = [
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::new(0.0, -0.3, 0.2),
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::zeros(),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let build = |k: f64| {
            Trajectory::new(
                offsets
                    .iter()
                    .map(|o| CameraPose::new(Mat3::identity(), o * k).unwrap())
                    .collect(),
            )
            .unwrap()
        };
        let e1 = pose_error(&build(1.0), &gt).unwrap();
        let e2 = pose_error(&build(2.0), &gt).unwrap();
        assert_eq!(e2.trans_err, 2.0 * e1.trans_err);
    }

    #[test]
    fn pose_error_length_mismatch() {
        let a = Trajectory::constant(CameraPose::identity(), 3).unwrap();
        let b = Trajectory::constant(CameraPose::identity(), 4).unwrap();
        assert!(matches!(pose_error(&a, &b), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn pose_error_path_length_scale() {
        let gt = Trajectory::new(
            (0..3)
                .map(|i| CameraPose::new(Mat3::identity(), Vec3::new(i as f64, 0.0, 0.0)).unwrap())
                .collect(),
        )
        .unwrap();
        let gen = Trajectory::constant(CameraPose::identity(), 3).unwrap();
        let raw = pose_error(&gen, &gt).unwrap();
        let scaled =
            pose_error_scaled(&gen, &gt, TranslationScale::ReferencePathLength).unwrap();
        assert_abs_diff_eq!(raw.trans_err, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scaled.trans_err, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn normalize_is_idempotent_and_world_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let traj = random_trajectory(&mut rng, 7);
            let n1 = normalize_trajectory(&traj);
            assert_eq!(*n1.first(), CameraPose::identity());
            let n2 = normalize_trajectory(&n1);
            assert_eq!(n1, n2);

            let g = random_pose(&mut rng);
            let moved = normalize_trajectory(&traj.change_world_frame(&g));
            for (a, b) in moved.poses().iter().zip(n1.poses()) {
                assert!((a.matrix() - b.matrix()).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn pose_error_zero_iff_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = normalize_trajectory(&random_trajectory(&mut rng, 6));
        let e = pose_error(&t, &t).unwrap();
        assert_eq!((e.rot_err, e.trans_err, e.cam_mc), (0.0, 0.0, 0.0));
        let u = normalize_trajectory(&random_trajectory(&mut rng, 6));
        let e = pose_error(&t, &u).unwrap();
        assert!(e.cam_mc > 0.0 && (e.rot_err > 0.0 || e.trans_err > 0.0));
    }

    #[test]
    fn trajectory_file_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let traj = random_trajectory(&mut rng, 77);
        let text = traj.to_file_string();
        let back = Trajectory::from_file_str(&text).unwrap();
        for (a, b) in traj.poses().iter().zip(back.poses()) {
            for (x, y) in a.to_row_major().iter().zip(b.to_row_major().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back.to_file_string(), text);
    }

    #[test]
    fn trajectory_file_rejects_bad_documents() {
        assert!(Trajectory::from_file_str("{}").is_err());
        let one = "{\"format_version\":1,\"frame_count\":1,\"poses\":[[1,0,0,0,0,1,0,0,0,0,1,0]]}";
        assert!(Trajectory::from_file_str(one).is_err());
        let bad_rot = "{\"format_version\":1,\"frame_count\":2,\"poses\":[[2,0,0,0,0,1,0,0,0,0,1,0],[1,0,0,0,0,1,0,0,0,0,1,0]]}";
        assert!(matches!(Trajectory::from_file_str(bad_rot), Err(Error::NotARotation(_))));
    }
}
