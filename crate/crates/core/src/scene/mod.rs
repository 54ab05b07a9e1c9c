//! Procedural scenes and the analytic ray tracer that renders them.
//!
//! A scene is a checkerboard ground, a handful of static spheres and boxes
//! arranged in a ring, one directional light and an animated subject built
//! from two capsules and a head sphere standing near the origin.

mod dataset;
mod render;
mod shapes;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{rot_y, Vec3};

pub use dataset::{
    background_mismatches, build_dataset, load_manifest, manifest_path, load_sample_pair, make_sample_pair, DatasetConfig, FrameFormat, Manifest,
    ManifestEntry, PairConfig, PairFiles, SampleMeta, SamplePair, MANIFEST_FORMAT_VERSION,
};
pub use render::{render_frame, render_panorama, render_video, RenderedFrame, RenderedVideo};
pub use shapes::{segment_aabb_distance, segment_point_distance};

/// Height of the subject's focus point (torso centre) above its base, which
/// is also the height of every starting camera.
pub const SUBJECT_FOCUS_HEIGHT: f64 = 3.0;
/// Every animated subject part stays within this horizontal radius of the base.
pub const SUBJECT_BOUND_RADIUS: f64 = 1.6;

/// No static geometry comes within this horizontal distance of the subject
/// base. Sampled cameras start 4 units out and move at most 8 more, so they
/// never enter an object or see the subject occluded by one.
pub const CAMERA_CLEAR_RADIUS: f64 = 12.5;
const OBJECT_RING: (f64, f64) = (14.0, 24.0);

pub const SKY_COLOR: [f32; 3] = [0.62, 0.74, 0.88];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ground {
    pub color_a: [f32; 3],
    pub color_b: [f32; 3],
    pub tile: f64,
}

/// Smooth sinusoidal stripes along the world vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stripes {
    pub color: [f32; 3],
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Axis-aligned box.
    Box { center: Vec3, half_extents: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub albedo: [f32; 3],
    pub stripes: Option<Stripes>,
}

impl SceneObject {
    /// Radius of a bounding sphere around the object's centre.
    pub fn bounding_radius(&self) -> f64 {
        match self.shape {
            Shape::Sphere { radius, .. } => radius,
            Shape::Box { half_extents, .. } => half_extents.norm(),
        }
    }

    pub fn center(&self) -> Vec3 {
        match self.shape {
            Shape::Sphere { center, .. } | Shape::Box { center, .. } => center,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        match self.shape {
            Shape::Sphere { center, radius } => (p - center).norm() < radius,
            Shape::Box { center, half_extents } => {
                let d = p - center;
                d.x.abs() < half_extents.x && d.y.abs() < half_extents.y && d.z.abs() < half_extents.z
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Light {
    /// Unit vector pointing from the scene toward the light.
    pub to_light: Vec3,
    pub intensity: f32,
    pub ambient: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Animation {
    Wave,
    Bounce,
    Spin,
    WalkInPlace,
}

impl Animation {
    pub const ALL: [Animation; 4] = [Animation::Wave, Animation::Bounce, Animation::Spin, Animation::WalkInPlace];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|a| *a == self).unwrap()
    }
}

/// Fixed subject palettes: legs, torso front, torso back, head.
pub const PALETTES: [[[f32; 3]; 4]; 4] = [
    [[0.15, 0.18, 0.45], [0.85, 0.20, 0.15], [0.95, 0.85, 0.20], [0.90, 0.72, 0.60]],
    [[0.10, 0.35, 0.15], [0.95, 0.95, 0.95], [0.20, 0.20, 0.25], [0.55, 0.38, 0.28]],
    [[0.40, 0.10, 0.40], [0.15, 0.70, 0.85], [0.95, 0.50, 0.10], [0.95, 0.80, 0.70]],
    [[0.25, 0.25, 0.25], [0.98, 0.60, 0.75], [0.35, 0.80, 0.30], [0.70, 0.50, 0.40]],
];

/// Number of distinct prompt tags (palette × animation).
pub const PROMPT_VOCAB: usize = PALETTES.len() * Animation::ALL.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    /// Legs capsule: bottom and top height of the axis, radius.
    pub legs: (f64, f64, f64),
    /// Torso capsule, same layout.
    pub torso: (f64, f64, f64),
    /// Head sphere: centre height, radius.
    pub head: (f64, f64),
}

impl Default for BodySpec {
    fn default() -> Self {
        Self {
            legs: (0.45, 2.0, 0.42),
            torso: (2.55, 3.35, 0.55),
            head: (4.05, 0.42),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub base_position: Vec3,
    /// Horizontal unit vector the subject faces.
    pub facing: Vec3,
    pub body: BodySpec,
    pub animation: Animation,
    /// Animation period in frames; `None` keeps the rest pose.
    pub period: Option<f64>,
    pub palette: usize,
}

/// Segment `a`–`b` swept by `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

/// The subject's geometry at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectPose {
    pub legs: Capsule,
    pub torso: Capsule,
    pub head_center: Vec3,
    pub head_radius: f64,
    /// Direction the torso front faces (rotates for the spin animation).
    pub torso_front: Vec3,
}

impl SubjectSpec {
    /// Point the cameras look at.
    pub fn focus(&self) -> Vec3 {
        self.base_position + Vec3::new(0.0, SUBJECT_FOCUS_HEIGHT, 0.0)
    }

    pub fn prompt_tag(&self) -> u32 {
        (self.palette * Animation::ALL.len() + self.animation.index()) as u32
    }

    pub fn pose_at(&self, frame: usize) -> SubjectPose {
        let phase = match self.period {
            Some(p) if p > 0.0 && p.is_finite() => std::f64::consts::TAU * frame as f64 / p,
            _ => 0.0,
        };
        let up = Vec3::y();
        let facing = self.facing;
        let side = facing.cross(&up);
        let base = self.base_position;
        let (l0, l1, lr) = self.body.legs;
        let (t0, t1, tr) = self.body.torso;
        let (hy, hr) = self.body.head;
        let mut legs_a = base + up * l0;
        let mut legs_b = base + up * l1;
        let mut torso_a = base + up * t0;
        let mut torso_b = base + up * t1;
        let mut head = base + up * hy;
        let mut front = facing;
        match self.animation {
            Animation::Wave => {
                let sway = side * (0.45 * phase.sin());
                torso_b += sway;
                head += sway * 1.3;
            }
            Animation::Bounce => {
                let lift = up * (0.5 * phase.sin().abs());
                legs_a += lift;
                legs_b += lift;
                torso_a += lift;
                torso_b += lift;
                head += lift;
            }
            Animation::Spin => {
                front = rot_y(phase) * facing;
            }
            Animation::WalkInPlace => {
                legs_a += facing * (0.4 * phase.sin());
                let bob = up * (0.1 * (2.0 * phase).sin().abs());
                torso_a += bob;
                torso_b += bob;
                head += bob;
            }
        }
        SubjectPose {
            legs: Capsule { a: legs_a, b: legs_b, radius: lr },
            torso: Capsule { a: torso_a, b: torso_b, radius: tr },
            head_center: head,
            head_radius: hr,
            torso_front: front,
        }
    }
}

/// Procedural scene description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub ground: Option<Ground>,
    pub objects: Vec<SceneObject>,
    pub light: Light,
    pub subject: SubjectSpec,
    pub sky: [f32; 3],
    /// Distance over which surfaces fade toward the sky colour.
    pub fog_distance: f64,
}

impl SceneSpec {
    /// Sky only: no ground, no objects; the subject stays.
    pub fn empty(subject: SubjectSpec) -> Self {
        Self {
            seed: 0,
            ground: None,
            objects: Vec::new(),
            light: Light {
                to_light: Vec3::new(0.3, 0.8, 0.5).normalize(),
                intensity: 0.8,
                ambient: 0.3,
            },
            subject,
            sky: SKY_COLOR,
            fog_distance: 80.0,
        }
    }

    /// Stable hash of the static layout (object shapes quantised to 1e-3).
    pub fn layout_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: f64| {
            h ^= (v * 1000.0).round() as i64 as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for o in &self.objects {
            match o.shape {
                Shape::Sphere { center, radius } => {
                    mix(1.0);
                    center.iter().for_each(|v| mix(*v));
                    mix(radius);
                }
                Shape::Box { center, half_extents } => {
                    mix(2.0);
                    center.iter().for_each(|v| mix(*v));
                    half_extents.iter().for_each(|v| mix(*v));
                }
            }
        }
        h
    }

    /// Smallest clearance between the subject and any static object over one
    /// animation cycle (or `frames` frames for a static subject).
    pub fn subject_clearance(&self, frames: usize) -> f64 {
        let n = match self.subject.period {
            Some(p) if p.is_finite() && p > 0.0 => p.ceil() as usize + 1,
            _ => frames.max(1),
        };
        let mut best = f64::INFINITY;
        for f in 0..n {
            let pose = self.subject.pose_at(f);
            for o in &self.objects {
                let d = shapes::subject_object_distance(&pose, &o.shape);
                best = best.min(d);
            }
        }
        best
    }

    pub fn eye_inside_geometry(&self, eye: &Vec3) -> bool {
        if self.ground.is_some() && eye.y <= 0.0 {
            return true;
        }
        self.objects.iter().any(|o| o.contains(eye))
    }
}

fn random_color(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> [f32; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

const GROUND_SCHEMES: [([f32; 3], [f32; 3]); 5] = [
    ([0.82, 0.82, 0.80], [0.30, 0.32, 0.35]),
    ([0.55, 0.70, 0.40], [0.30, 0.45, 0.22]),
    ([0.85, 0.75, 0.55], [0.55, 0.40, 0.28]),
    ([0.70, 0.72, 0.85], [0.25, 0.28, 0.45]),
    ([0.90, 0.60, 0.45], [0.45, 0.25, 0.20]),
];

/// Deterministic scene for `seed`.
pub fn build_scene(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_e5ee_d000_0001);
    let (ca, cb) = GROUND_SCHEMES[rng.random_range(0..GROUND_SCHEMES.len())];
    let ground = Ground {
        color_a: ca,
        color_b: cb,
        tile: rng.random_range(1.5..3.0),
    };

    let base_position = Vec3::new(rng.random_range(-1.0..1.0), 0.0, rng.random_range(-1.0..1.0));
    let facing_angle = rng.random_range(0.0..std::f64::consts::TAU);
    let facing = rot_y(facing_angle) * Vec3::new(0.0, 0.0, 1.0);
    let animation = Animation::ALL[rng.random_range(0..Animation::ALL.len())];
    let scale = rng.random_range(0.9..1.1);
    let d = BodySpec::default();
    let body = BodySpec {
        legs: (d.legs.0, d.legs.1 * scale, d.legs.2 * scale),
        torso: (d.torso.0 * scale, d.torso.1 * scale, d.torso.2 * scale),
        head: (d.head.0 * scale, d.head.1 * scale),
    };
    let subject = SubjectSpec {
        base_position,
        facing,
        body,
        animation,
        period: Some(rng.random_range(12.0..32.0)),
        palette: rng.random_range(0..PALETTES.len()),
    };

    let count = rng.random_range(5..=9);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(count);
    let mut attempts = 0;
    while objects.len() < count && attempts < 500 {
        attempts += 1;
        let r = rng.random_range(OBJECT_RING.0..OBJECT_RING.1);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        let shape = if rng.random_bool(0.5) {
            let radius = rng.random_range(0.8..2.4);
            Shape::Sphere {
                center: Vec3::new(base_position.x + r * c, radius, base_position.z + r * s),
                radius,
            }
        } else {
            let half = Vec3::new(rng.random_range(0.6..2.0), rng.random_range(0.6..3.0), rng.random_range(0.6..2.0));
            Shape::Box {
                center: Vec3::new(base_position.x + r * c, half.y, base_position.z + r * s),
                half_extents: half,
            }
        };
        let albedo = random_color(&mut rng, 0.12, 0.95);
        let stripes = if rng.random_bool(0.5) {
            Some(Stripes {
                color: random_color(&mut rng, 0.05, 0.95),
                frequency: rng.random_range(1.0..3.0),
            })
        } else {
            None
        };
        let obj = SceneObject { shape, albedo, stripes };
        let flat = Vec3::new(obj.center().x - base_position.x, 0.0, obj.center().z - base_position.z);
        let clear = flat.norm() - obj.bounding_radius() >= CAMERA_CLEAR_RADIUS
            && objects.iter().all(|o| (o.center() - obj.center()).norm() > o.bounding_radius() + obj.bounding_radius() + 0.3);
        if clear {
            objects.push(obj);
        }
    }

    let elevation = rng.random_range(35f64..70.0).to_radians();
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let to_light = Vec3::new(elevation.cos() * azimuth.cos(), elevation.sin(), elevation.cos() * azimuth.sin());
    SceneSpec {
        seed,
        ground: Some(ground),
        objects,
        light: Light {
            to_light,
            intensity: rng.random_range(0.65..0.85),
            ambient: rng.random_range(0.25..0.35),
        },
        subject,
        sky: SKY_COLOR,
        fog_distance: 80.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_scene_is_deterministic() {
        assert_eq!(build_scene(3), build_scene(3));
        assert_ne!(build_scene(3), build_scene(4));
    }

    #[test]
    fn scenes_are_valid() {
        for seed in 0..100 {
            let s = build_scene(seed);
            assert!(s.objects.len() >= 3, "seed {seed}");
            assert!(s.subject_clearance(1) > 0.0, "seed {seed}");
            for o in &s.objects {
                let d = o.center() - s.subject.base_position;
                assert!(d.x.hypot(d.z) - o.bounding_radius() >= CAMERA_CLEAR_RADIUS);
                assert!(o.albedo.iter().all(|c| (0.0..=1.0).contains(c)));
            }
            assert!((s.subject.facing.norm() - 1.0).abs() < 1e-12 && s.subject.facing.y == 0.0);
        }
    }

    #[test]
    fn subject_stays_within_bound() {
        for seed in 0..20 {
            let s = build_scene(seed);
            let base = s.subject.base_position;
            for f in 0..64 {
                let p = s.subject.pose_at(f);
                let horiz = |v: Vec3| ((v.x - base.x).powi(2) + (v.z - base.z).powi(2)).sqrt();
                let parts = [
                    horiz(p.legs.a) + p.legs.radius,
                    horiz(p.legs.b) + p.legs.radius,
                    horiz(p.torso.a) + p.torso.radius,
                    horiz(p.torso.b) + p.torso.radius,
                    horiz(p.head_center) + p.head_radius,
                ];
                assert!(parts.iter().all(|d| *d <= SUBJECT_BOUND_RADIUS), "{parts:?}");
            }
        }
    }

    #[test]
    fn static_subject_pose_is_constant() {
        let mut s = build_scene(1).subject;
        s.period = None;
        assert_eq!(s.pose_at(0), s.pose_at(17));
    }
}
