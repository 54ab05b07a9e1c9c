//! Primary-ray renderer. Every pixel is traced independently so the output
//! does not depend on how rows are split across threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Trajectory, Vec3};
use crate::image::{Mask, RgbImage, Video};
use crate::panorama::{lonlat_to_dir, pinhole_ray, Panorama};

use super::shapes::{ray_capsule, ray_shape, ray_sphere, T_MIN};
use super::{SceneSpec, SubjectPose, PALETTES};

/// Distance over which the checker contrast fades out, which keeps the far
/// ground from aliasing.
const CHECKER_FADE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub image: RgbImage,
    /// True where the primary ray hits the subject.
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedVideo {
    pub video: Video,
    pub masks: Vec<Mask>,
}

fn mix(a: [f32; 3], b: [f32; 3], t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    [0, 1, 2].map(|c| a[c] as f64 * (1.0 - t) + b[c] as f64 * t)
}

fn lambert(scene: &SceneSpec, albedo: [f64; 3], n: &Vec3) -> [f64; 3] {
    let l = scene.light;
    let k = l.ambient as f64 + l.intensity as f64 * n.dot(&l.to_light).max(0.0);
    albedo.map(|a| a * k)
}

fn fog(scene: &SceneSpec, color: [f64; 3], dist: f64) -> [f32; 3] {
    let f = 1.0 - (-dist / scene.fog_distance).exp();
    let sky = scene.sky;
    [0, 1, 2].map(|c| (color[c] * (1.0 - f) + sky[c] as f64 * f).clamp(0.0, 1.0) as f32)
}

/// Nearest static surface along the ray, already shaded.
fn trace_static(scene: &SceneSpec, o: &Vec3, d: &Vec3) -> (f64, [f32; 3]) {
    let mut best_t = f64::INFINITY;
    let mut best: Option<(Vec3, [f64; 3])> = None;
    if let Some(g) = &scene.ground {
        if d.y < -1e-12 {
            let t = -o.y / d.y;
            if t >= T_MIN {
                best_t = t;
                let p = o + d * t;
                let s = (std::f64::consts::PI * p.x / g.tile).sin() * (std::f64::consts::PI * p.z / g.tile).sin();
                let contrast = (-t / CHECKER_FADE).exp();
                let w = 0.5 + 0.5 * (3.0 * s).tanh() / 3f64.tanh() * contrast;
                best = Some((Vec3::y(), mix(g.color_b, g.color_a, w)));
            }
        }
    }
    for obj in &scene.objects {
        if let Some((t, n)) = ray_shape(o, d, &obj.shape) {
            if t < best_t {
                best_t = t;
                let albedo = match obj.stripes {
                    Some(st) => {
                        let p = o + d * t;
                        let w = 0.5 + 0.5 * (std::f64::consts::TAU * st.frequency * p.y).sin();
                        mix(obj.albedo, st.color, w)
                    }
                    None => obj.albedo.map(|c| c as f64),
                };
                best = Some((n, albedo));
            }
        }
    }
    match best {
        Some((n, albedo)) => (best_t, fog(scene, lambert(scene, albedo, &n), best_t)),
        None => (f64::INFINITY, scene.sky),
    }
}

fn trace_subject(scene: &SceneSpec, pose: &SubjectPose, o: &Vec3, d: &Vec3) -> Option<(f64, [f32; 3])> {
    let pal = PALETTES[scene.subject.palette % PALETTES.len()];
    let mut best: Option<(f64, Vec3, [f32; 3])> = None;
    let mut consider = |hit: Option<(f64, Vec3)>, color: &dyn Fn(&Vec3) -> [f32; 3]| {
        if let Some((t, n)) = hit {
            if best.is_none_or(|b| t < b.0) {
                let p = o + d * t;
                best = Some((t, n, color(&p)));
            }
        }
    };
    consider(ray_capsule(o, d, &pose.legs), &|_| pal[0]);
    let torso = pose.torso;
    let front = pose.torso_front;
    consider(ray_capsule(o, d, &torso), &|p| {
        if (p - (torso.a + torso.b) * 0.5).dot(&front) >= 0.0 {
            pal[1]
        } else {
            pal[2]
        }
    });
    consider(ray_sphere(o, d, &pose.head_center, pose.head_radius), &|_| pal[3]);
    best.map(|(t, n, c)| (t, fog(scene, lambert(scene, c.map(|v| v as f64), &n), t)))
}

/// Renders one frame. The static part of every pixel is traced and shaded the
/// same way whether or not the subject is present, so the two renders agree
/// bit for bit wherever the mask is false.
pub fn render_frame(
    scene: &SceneSpec,
    pose: &CameraPose,
    frame_index: usize,
    with_subject: bool,
    width: usize,
    height: usize,
    fov_deg: f64,
) -> Result<RenderedFrame> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(Error::BadFov(fov_deg));
    }
    if width == 0 || height == 0 {
        return Err(Error::EmptyOutput(format!("requested {width}x{height} frame")));
    }
    let fov = fov_deg.to_radians();
    let eye = pose.eye();
    let subject = with_subject.then(|| scene.subject.pose_at(frame_index));
    let mut data = vec![0.0f32; width * height * 3];
    let mut bits = vec![false; width * height];
    data.par_chunks_mut(width * 3)
        .zip(bits.par_chunks_mut(width))
        .enumerate()
        .for_each(|(row, (line, mline))| {
            for col in 0..width {
                let d = pose.to_world_dir(&pinhole_ray(col, row, width, height, fov)).normalize();
                let (t_static, mut rgb) = trace_static(scene, &eye, &d);
                if let Some(sp) = &subject {
                    if let Some((t, c)) = trace_subject(scene, sp, &eye, &d) {
                        if t < t_static {
                            rgb = c;
                            mline[col] = true;
                        }
                    }
                }
                line[col * 3..col * 3 + 3].copy_from_slice(&rgb);
            }
        });
    Ok(RenderedFrame {
        image: RgbImage::from_raw(width, height, data)?,
        mask: Mask::from_raw(width, height, bits)?,
    })
}

/// Renders every pose of `traj`; frame `i` animates the subject at index `i`.
pub fn render_video(
    scene: &SceneSpec,
    traj: &Trajectory,
    with_subject: bool,
    width: usize,
    height: usize,
    fov_deg: f64,
) -> Result<RenderedVideo> {
    let mut frames = Vec::with_capacity(traj.frame_count());
    let mut masks = Vec::with_capacity(traj.frame_count());
    for (i, pose) in traj.poses().iter().enumerate() {
        let f = render_frame(scene, pose, i, with_subject, width, height, fov_deg)?;
        frames.push(f.image);
        masks.push(f.mask);
    }
    Ok(RenderedVideo {
        video: Video::new(frames)?,
        masks,
    })
}

/// Equirectangular render of the static scene (no subject) seen from `eye`.
pub fn render_panorama(scene: &SceneSpec, eye: &Vec3, pano_h: usize) -> Result<Panorama> {
    if scene.eye_inside_geometry(eye) {
        return Err(Error::EyeInsideGeometry([eye.x, eye.y, eye.z]));
    }
    Panorama::from_fn(pano_h, |lon, lat| trace_static(scene, eye, &lonlat_to_dir(lon, lat)).1)
}
