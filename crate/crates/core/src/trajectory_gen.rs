//! Cinematographic camera movements: pan, tilt, arc, dolly, truck and
//! pedestal, all with linear speed.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{look_at, rot_x, rot_y, CameraPose, Trajectory, Vec3, DEFAULT_FRAME_COUNT};

/// Default rotation of pan and horizontal arc movements, degrees.
pub const DEFAULT_SWEEP_DEG: f64 = 75.0;
/// Legal range of tilt and vertical arc magnitudes, degrees.
pub const VERTICAL_RANGE_DEG: (f64, f64) = (10.0, 45.0);
/// Default distance between the starting eye and the subject.
pub const DEFAULT_START_DISTANCE: f64 = 4.0;
/// Initial viewpoint azimuth range relative to the subject's facing, degrees.
pub const AZIMUTH_RANGE_DEG: (f64, f64) = (-45.0, 45.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MovementKind {
    Pan,
    Tilt,
    ArcHorizontal,
    ArcVertical,
    Dolly,
    Truck,
    Pedestal,
}

impl MovementKind {
    pub const ALL: [MovementKind; 7] = [
        MovementKind::Pan,
        MovementKind::Tilt,
        MovementKind::ArcHorizontal,
        MovementKind::ArcVertical,
        MovementKind::Dolly,
        MovementKind::Truck,
        MovementKind::Pedestal,
    ];

    pub fn directions(self) -> [Direction; 2] {
        use Direction::*;
        match self {
            MovementKind::Pan | MovementKind::ArcHorizontal | MovementKind::Truck => [Left, Right],
            MovementKind::Tilt | MovementKind::ArcVertical | MovementKind::Pedestal => [Up, Down],
            MovementKind::Dolly => [Forward, Backward],
        }
    }

    pub fn is_rotational(self) -> bool {
        matches!(self, MovementKind::Pan | MovementKind::Tilt)
    }

    pub fn is_translational(self) -> bool {
        matches!(self, MovementKind::Dolly | MovementKind::Truck | MovementKind::Pedestal)
    }

    pub fn name(self) -> &'static str {
        match self {
            MovementKind::Pan => "pan",
            MovementKind::Tilt => "tilt",
            MovementKind::ArcHorizontal => "arc_horizontal",
            MovementKind::ArcVertical => "arc_vertical",
            MovementKind::Dolly => "dolly",
            MovementKind::Truck => "truck",
            MovementKind::Pedestal => "pedestal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for MovementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
    Forward,
    Backward,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
        Direction::Forward,
        Direction::Backward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }

    /// +1 for right/up/forward, −1 otherwise.
    fn sign(self) -> f64 {
        match self {
            Direction::Right | Direction::Up | Direction::Forward => 1.0,
            _ => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Legal distance-factor range of a translational movement.
pub fn factor_range(kind: MovementKind, direction: Direction) -> Option<(f64, f64)> {
    use Direction::*;
    match (kind, direction) {
        (MovementKind::Dolly, Forward) => Some((0.25, 1.25)),
        (MovementKind::Dolly, Backward) => Some((0.25, 2.0)),
        (MovementKind::Truck, Left | Right) => Some((0.25, 2.0)),
        (MovementKind::Pedestal, Up | Down) => Some((0.25, 2.0 / 3.0)),
        _ => None,
    }
}

/// One camera movement request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementSpec {
    pub kind: MovementKind,
    pub direction: Direction,
    /// Degrees for rotational and arc kinds, a distance factor relative to the
    /// eye–subject distance for dolly, truck and pedestal.
    pub magnitude: f64,
    pub frames: usize,
    pub subject_position: Option<Vec3>,
    pub start_pose: CameraPose,
}

impl MovementSpec {
    pub fn new(kind: MovementKind, direction: Direction, magnitude: f64, start_pose: CameraPose) -> Self {
        Self {
            kind,
            direction,
            magnitude,
            frames: DEFAULT_FRAME_COUNT,
            subject_position: None,
            start_pose,
        }
    }

    pub fn with_frames(mut self, frames: usize) -> Self {
        self.frames = frames;
        self
    }

    pub fn with_subject(mut self, subject: Vec3) -> Self {
        self.subject_position = Some(subject);
        self
    }

    fn check_direction(&self) -> Result<()> {
        if !self.kind.directions().contains(&self.direction) {
            return Err(Error::BadDirection {
                kind: self.kind.to_string(),
                direction: self.direction.to_string(),
            });
        }
        Ok(())
    }

    fn check_common(&self, kinds: &[MovementKind]) -> Result<()> {
        if !kinds.contains(&self.kind) {
            return Err(Error::Config(format!("{} is not handled here", self.kind)));
        }
        self.check_direction()?;
        if self.frames < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "a movement needs at least 2 frames, got {}",
                self.frames
            )));
        }
        if !self.magnitude.is_finite() || self.magnitude < 0.0 {
            return Err(Error::Config(format!("magnitude must be finite and non-negative, got {}", self.magnitude)));
        }
        Ok(())
    }

    fn subject(&self) -> Result<Vec3> {
        self.subject_position
            .ok_or_else(|| Error::Config(format!("{} movement needs a subject position", self.kind)))
    }

    /// Fraction of the movement completed at frame `i`.
    fn progress(&self, i: usize) -> f64 {
        i as f64 / (self.frames - 1) as f64
    }
}

fn check_vertical_range(magnitude: f64) -> Result<()> {
    let (min, max) = VERTICAL_RANGE_DEG;
    if !(min..=max).contains(&magnitude) {
        return Err(Error::MagnitudeOutOfRange { value: magnitude, min, max });
    }
    Ok(())
}

/// Rotation about the world vertical axis through the camera; the eye stays put.
pub fn pan(spec: &MovementSpec) -> Result<Trajectory> {
    spec.check_common(&[MovementKind::Pan])?;
    let c0 = spec.start_pose.rotation().transpose();
    let eye = spec.start_pose.eye();
    let total = spec.direction.sign() * spec.magnitude.to_radians();
    let poses = (0..spec.frames)
        .map(|i| {
            if i == 0 {
                return Ok(spec.start_pose);
            }
            // Positive yaw turns right, which is a negative rotation about +y.
            CameraPose::from_eye(rot_y(-total * spec.progress(i)) * c0, eye)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(poses)
}

/// Rotation about the camera's own horizontal axis; the eye stays put.
pub fn tilt(spec: &MovementSpec) -> Result<Trajectory> {
    spec.check_common(&[MovementKind::Tilt])?;
    check_vertical_range(spec.magnitude)?;
    let c0 = spec.start_pose.rotation().transpose();
    let eye = spec.start_pose.eye();
    let total = spec.direction.sign() * spec.magnitude.to_radians();
    let poses = (0..spec.frames)
        .map(|i| {
            if i == 0 {
                return Ok(spec.start_pose);
            }
            CameraPose::from_eye(c0 * rot_x(total * spec.progress(i)), eye)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(poses)
}

/// Orbit around the subject while looking at it.
pub fn arc(spec: &MovementSpec) -> Result<Trajectory> {
    spec.check_common(&[MovementKind::ArcHorizontal, MovementKind::ArcVertical])?;
    let subject = spec.subject()?;
    let offset = spec.start_pose.eye() - subject;
    if offset.norm() < 1e-6 {
        return Err(Error::SubjectAtEye);
    }
    let total = spec.direction.sign() * spec.magnitude.to_radians();
    let up = Vec3::y();
    let rotate: Box<dyn Fn(f64) -> Vec3> = match spec.kind {
        // Positive angles move the camera toward its right.
        MovementKind::ArcHorizontal => Box::new(move |a| rot_y(a) * offset),
        _ => {
            check_vertical_range(spec.magnitude)?;
            let axis = offset.cross(&up);
            if axis.norm() < 1e-9 * offset.norm() {
                return Err(Error::DegenerateLookAt("vertical arc starting directly above or below the subject"));
            }
            let axis = nalgebra::Unit::new_normalize(axis);
            Box::new(move |a| nalgebra::Rotation3::from_axis_angle(&axis, a) * offset)
        }
    };
    let poses = (0..spec.frames)
        .map(|i| look_at(subject + rotate(total * spec.progress(i)), subject, up))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(poses)
}

/// Dolly, truck or pedestal: pure translation along a camera axis.
pub fn linear_move(spec: &MovementSpec) -> Result<Trajectory> {
    spec.check_common(&[MovementKind::Dolly, MovementKind::Truck, MovementKind::Pedestal])?;
    let (min, max) = factor_range(spec.kind, spec.direction).expect("direction checked");
    if !(min..=max).contains(&spec.magnitude) {
        return Err(Error::FactorOutOfRange {
            value: spec.magnitude,
            min,
            max,
        });
    }
    let subject = spec.subject()?;
    let start = spec.start_pose;
    let eye0 = start.eye();
    let distance = (eye0 - subject).norm();
    let axis = match spec.kind {
        MovementKind::Dolly => start.forward(),
        MovementKind::Truck => start.right(),
        _ => start.up(),
    };
    let displacement = axis * (spec.direction.sign() * spec.magnitude * distance);
    let c0 = start.rotation().transpose();
    let poses = (0..spec.frames)
        .map(|i| {
            if i == 0 {
                return Ok(start);
            }
            CameraPose::from_eye(c0, eye0 + displacement * spec.progress(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(poses)
}

/// Dispatches on the movement kind.
pub fn generate(spec: &MovementSpec) -> Result<Trajectory> {
    match spec.kind {
        MovementKind::Pan => pan(spec),
        MovementKind::Tilt => tilt(spec),
        MovementKind::ArcHorizontal | MovementKind::ArcVertical => arc(spec),
        MovementKind::Dolly | MovementKind::Truck | MovementKind::Pedestal => linear_move(spec),
    }
}

/// Settings for [`sample_movement`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub frames: usize,
    pub start_distance: f64,
    pub sweep_deg: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            frames: DEFAULT_FRAME_COUNT,
            start_distance: DEFAULT_START_DISTANCE,
            sweep_deg: DEFAULT_SWEEP_DEG,
        }
    }
}

/// Horizontal unit vector at `azimuth` radians from `facing` about `+y`.
fn rotate_facing(facing: &Vec3, azimuth: f64) -> Result<Vec3> {
    let flat = Vec3::new(facing.x, 0.0, facing.z);
    if flat.norm() < 1e-9 {
        return Err(Error::Config("subject facing must have a horizontal component".into()));
    }
    Ok(rot_y(azimuth) * flat.normalize())
}

/// Starting pose on the given azimuth around the subject, level with it.
pub fn start_pose_at(subject: Vec3, facing: &Vec3, azimuth_deg: f64, distance: f64) -> Result<CameraPose> {
    let dir = rotate_facing(facing, azimuth_deg.to_radians())?;
    look_at(subject + dir * distance, subject, Vec3::y())
}

/// Signed azimuth (degrees) of the eye around the subject, measured from
/// `facing`; inverse of [`start_pose_at`].
pub fn eye_azimuth_deg(subject: &Vec3, facing: &Vec3, eye: &Vec3) -> f64 {
    let a = Vec3::new(facing.x, 0.0, facing.z);
    let b = Vec3::new(eye.x - subject.x, 0.0, eye.z - subject.z);
    // rot_y(+θ) maps x toward −z, so the signed angle uses (b × a)·y.
    let cross = a.z * b.x - a.x * b.z;
    cross.atan2(a.dot(&b)).to_degrees()
}

/// Draws a random movement around a subject: kind and direction uniform over
/// the taxonomy, magnitude uniform in its legal range, start azimuth uniform
/// in ±45° of the subject's facing.
pub fn sample_movement(
    seed: u64,
    subject_position: Vec3,
    subject_facing: Vec3,
    config: &SamplerConfig,
) -> Result<(MovementSpec, Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = MovementKind::ALL[rng.random_range(0..MovementKind::ALL.len())];
    let direction = kind.directions()[rng.random_range(0..2)];
    let magnitude = match kind {
        MovementKind::Pan | MovementKind::ArcHorizontal => config.sweep_deg,
        MovementKind::Tilt | MovementKind::ArcVertical => {
            rng.random_range(VERTICAL_RANGE_DEG.0..=VERTICAL_RANGE_DEG.1)
        }
        _ => {
            let (lo, hi) = factor_range(kind, direction).expect("valid direction");
            rng.random_range(lo..=hi)
        }
    };
    let azimuth = rng.random_range(AZIMUTH_RANGE_DEG.0..=AZIMUTH_RANGE_DEG.1);
    let start = start_pose_at(subject_position, &subject_facing, azimuth, config.start_distance)?;
    let spec = MovementSpec {
        kind,
        direction,
        magnitude,
        frames: config.frames,
        subject_position: Some(subject_position),
        start_pose: start,
    };
    let traj = generate(&spec)?;
    Ok((spec, traj))
}
