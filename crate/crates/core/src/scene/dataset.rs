//! Paired samples and the on-disk dataset layout.
//!
//! ```text
//! out_dir/
//!   manifest.json
//!   pair_0000/
//!     video_with.ctn | video_with/000.png ...
//!     video_without.ctn | video_without/000.png ...
//!     masks/000.png ...            1-bit
//!     panorama.ctn | panorama.png
//!     trajectory.json
//!     meta.json
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Trajectory, Vec3};
use crate::image::{Mask, RgbImage, Video};
use crate::io::{read_image, read_json, read_mask_png, write_json, write_mask_png, write_png, RawTensor};
use crate::panorama::{scene_context_from_panorama, Panorama, SceneContextSet, CONTEXT_FOV_DEG};
use crate::trajectory_gen::{sample_movement, MovementSpec, SamplerConfig};

use super::render::{render_panorama, render_video};
use super::{build_scene, SUBJECT_FOCUS_HEIGHT};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub pano_h: usize,
    pub fov_deg: f64,
    pub start_distance: f64,
    pub sweep_deg: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            frames: s.frames,
            width: 64,
            height: 64,
            pano_h: 256,
            fov_deg: CONTEXT_FOV_DEG,
            start_distance: s.start_distance,
            sweep_deg: s.sweep_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub video_with_subject: Video,
    pub video_without_subject: Video,
    pub subject_masks: Vec<Mask>,
    pub panorama: Panorama,
    /// Viewpoint the panorama was rendered from.
    pub panorama_eye: Vec3,
    pub trajectory: Trajectory,
    pub movement: MovementSpec,
    pub prompt_tag: u32,
    pub scene_seed: u64,
}

impl SamplePair {
    /// Longitude (degrees) the first frame looks along.
    pub fn start_yaw(&self) -> f64 {
        self.trajectory.first().yaw().to_degrees()
    }

    /// `v` context views around the panorama viewpoint, view 0 aligned with
    /// the first video frame.
    pub fn context(&self, v: usize, width: usize, height: usize) -> Result<SceneContextSet> {
        scene_context_from_panorama(&self.panorama, self.start_yaw(), v, width, height)
    }

    /// Lists every broken invariant; empty when the pair is consistent.
    pub fn audit(&self) -> Vec<String> {
        let mut out = Vec::new();
        let f = self.trajectory.frame_count();
        if self.video_with_subject.len() != f || self.video_without_subject.len() != f || self.subject_masks.len() != f {
            out.push(format!(
                "frame counts differ: trajectory {f}, with {}, without {}, masks {}",
                self.video_with_subject.len(),
                self.video_without_subject.len(),
                self.subject_masks.len()
            ));
            return out;
        }
        if self.video_with_subject.dims() != self.video_without_subject.dims() {
            out.push("video shapes differ".into());
            return out;
        }
        for (i, ((a, b), m)) in self
            .video_with_subject
            .frames()
            .iter()
            .zip(self.video_without_subject.frames())
            .zip(&self.subject_masks)
            .enumerate()
        {
            if (m.width(), m.height()) != (a.width(), a.height()) {
                out.push(format!("frame {i}: mask shape differs"));
                continue;
            }
            let bad = background_mismatches(a, b, m);
            if bad > 0 {
                out.push(format!("frame {i}: {bad} background pixels differ"));
            }
        }
        if self.panorama_eye != self.trajectory.first().eye() {
            out.push("panorama viewpoint is not the first trajectory eye".into());
        }
        out
    }
}

/// Number of pixels outside `mask` whose values are not bit-identical.
pub fn background_mismatches(a: &RgbImage, b: &RgbImage, mask: &Mask) -> usize {
    mask.bits()
        .iter()
        .enumerate()
        .filter(|(i, m)| {
            !**m && a.data()[i * 3..i * 3 + 3]
                .iter()
                .zip(&b.data()[i * 3..i * 3 + 3])
                .any(|(x, y)| x.to_bits() != y.to_bits())
        })
        .count()
}

/// Builds the scene for `scene_seed`, samples a movement around its subject
/// and renders both videos plus the panorama at the first eye.
pub fn make_sample_pair(scene_seed: u64, movement_seed: u64, config: &PairConfig) -> Result<SamplePair> {
    let scene = build_scene(scene_seed);
    let sampler = SamplerConfig {
        frames: config.frames,
        start_distance: config.start_distance,
        sweep_deg: config.sweep_deg,
    };
    let (movement, trajectory) = sample_movement(movement_seed, scene.subject.focus(), scene.subject.facing, &sampler)?;
    let with = render_video(&scene, &trajectory, true, config.width, config.height, config.fov_deg)?;
    let without = render_video(&scene, &trajectory, false, config.width, config.height, config.fov_deg)?;
    let eye = trajectory.first().eye();
    let panorama = render_panorama(&scene, &eye, config.pano_h)?;
    debug_assert!((eye.y - SUBJECT_FOCUS_HEIGHT).abs() < 1e-9);
    Ok(SamplePair {
        video_with_subject: with.video,
        video_without_subject: without.video,
        subject_masks: with.masks,
        panorama,
        panorama_eye: eye,
        trajectory,
        movement,
        prompt_tag: scene.subject.prompt_tag(),
        scene_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFormat {
    /// Lossless f32 tensor container.
    Tensor,
    /// 8-bit RGB PNG per frame.
    Png,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub pairs: usize,
    pub scenes: usize,
    pub seed: u64,
    pub pair: PairConfig,
    pub frame_format: FrameFormat,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            pairs: 64,
            scenes: 8,
            seed: 0,
            pair: PairConfig {
                frames: 9,
                ..PairConfig::default()
            },
            frame_format: FrameFormat::Tensor,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 || self.scenes == 0 {
            return Err(Error::Config("pairs and scenes must be positive".into()));
        }
        if self.pair.frames < 2 {
            return Err(Error::Config("pairs need at least 2 frames".into()));
        }
        if self.pair.width == 0 || self.pair.height == 0 || self.pair.pano_h == 0 {
            return Err(Error::Config("resolutions must be positive".into()));
        }
        Ok(())
    }

    /// Scene seed used by pair `i`; pairs cycle over `scenes` scenes.
    pub fn scene_seed(&self, i: usize) -> u64 {
        mix_seed(self.seed, (i % self.scenes) as u64)
    }

    pub fn movement_seed(&self, i: usize) -> u64 {
        mix_seed(self.seed ^ 0x6d6f_7665, (1 << 32) + i as u64)
    }
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Paths of one pair's files, relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFiles {
    /// One tensor file, or one PNG per frame.
    pub video_with: Vec<String>,
    pub video_without: Vec<String>,
    pub masks: Vec<String>,
    pub panorama: String,
    pub trajectory: String,
    pub meta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub scene_seed: u64,
    pub movement_seed: u64,
    pub movement: MovementSpec,
    pub prompt_tag: u32,
    pub panorama_eye: [f64; 3],
    pub start_yaw_deg: f64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub pano_h: usize,
    pub fov_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub scene_seed: u64,
    pub movement_seed: u64,
    pub kind: String,
    pub direction: String,
    pub magnitude: f64,
    pub prompt_tag: u32,
    pub files: PairFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: DatasetConfig,
    pub entries: Vec<ManifestEntry>,
}

fn write_video(root: &Path, dir: &str, stem: &str, video: &Video, format: FrameFormat) -> Result<Vec<String>> {
    match format {
        FrameFormat::Tensor => {
            let rel = format!("{dir}/{stem}.ctn");
            video.to_tensor().write(root.join(&rel))?;
            Ok(vec![rel])
        }
        FrameFormat::Png => video
            .frames()
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let rel = format!("{dir}/{stem}/{i:03}.png");
                write_png(root.join(&rel), f)?;
                Ok(rel)
            })
            .collect(),
    }
}

fn read_video(root: &Path, files: &[String]) -> Result<Video> {
    match files {
        [one] if one.ends_with(".ctn") => Video::from_tensor(&RawTensor::read(root.join(one))?),
        _ => Video::new(files.iter().map(|f| read_image(root.join(f))).collect::<Result<Vec<_>>>()?),
    }
}

/// Writes one pair under `root/id` and returns its manifest entry.
fn write_pair(
    root: &Path,
    id: &str,
    pair: &SamplePair,
    movement_seed: u64,
    config: &PairConfig,
    format: FrameFormat,
) -> Result<ManifestEntry> {
    let video_with = write_video(root, id, "video_with", &pair.video_with_subject, format)?;
    let video_without = write_video(root, id, "video_without", &pair.video_without_subject, format)?;
    let masks = pair
        .subject_masks
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let rel = format!("{id}/masks/{i:03}.png");
            write_mask_png(root.join(&rel), m)?;
            Ok(rel)
        })
        .collect::<Result<Vec<_>>>()?;
    let panorama = match format {
        FrameFormat::Tensor => {
            let rel = format!("{id}/panorama.ctn");
            pair.panorama.image().to_tensor().write(root.join(&rel))?;
            rel
        }
        FrameFormat::Png => {
            let rel = format!("{id}/panorama.png");
            write_png(root.join(&rel), pair.panorama.image())?;
            rel
        }
    };
    let trajectory = format!("{id}/trajectory.json");
    pair.trajectory.write(root.join(&trajectory))?;
    let meta_rel = format!("{id}/meta.json");
    let e = pair.panorama_eye;
    let meta = SampleMeta {
        scene_seed: pair.scene_seed,
        movement_seed,
        movement: pair.movement.clone(),
        prompt_tag: pair.prompt_tag,
        panorama_eye: [e.x, e.y, e.z],
        start_yaw_deg: pair.start_yaw(),
        frames: config.frames,
        width: config.width,
        height: config.height,
        pano_h: config.pano_h,
        fov_deg: config.fov_deg,
    };
    write_json(root.join(&meta_rel), &meta)?;
    Ok(ManifestEntry {
        id: id.to_string(),
        scene_seed: pair.scene_seed,
        movement_seed,
        kind: pair.movement.kind.name().to_string(),
        direction: pair.movement.direction.name().to_string(),
        magnitude: pair.movement.magnitude,
        prompt_tag: pair.prompt_tag,
        files: PairFiles {
            video_with,
            video_without,
            masks,
            panorama,
            trajectory,
            meta: meta_rel,
        },
    })
}

/// Generates `config.pairs` samples into `out_dir` and writes the manifest.
/// Output is a pure function of `config`.
pub fn build_dataset(config: &DatasetConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    config.validate()?;
    let root = out_dir.as_ref();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut entries = Vec::with_capacity(config.pairs);
    for i in 0..config.pairs {
        let scene_seed = config.scene_seed(i);
        let movement_seed = config.movement_seed(i);
        let pair = make_sample_pair(scene_seed, movement_seed, &config.pair)?;
        let id = format!("pair_{i:04}");
        entries.push(write_pair(root, &id, &pair, movement_seed, &config.pair, config.frame_format)?);
    }
    let manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        config: config.clone(),
        entries,
    };
    write_json(root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn manifest_path(dataset_dir: impl AsRef<Path>) -> PathBuf {
    dataset_dir.as_ref().join("manifest.json")
}

pub fn load_manifest(dataset_dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = manifest_path(&dataset_dir);
    let m: Manifest = read_json(&path)?;
    if m.format_version != MANIFEST_FORMAT_VERSION {
        return Err(Error::Parse {
            path,
            message: format!("unsupported manifest format_version {}", m.format_version),
        });
    }
    Ok(m)
}

pub fn load_sample_pair(dataset_dir: impl AsRef<Path>, entry: &ManifestEntry) -> Result<SamplePair> {
    let root = dataset_dir.as_ref();
    let files = &entry.files;
    let meta: SampleMeta = read_json(root.join(&files.meta))?;
    let pano_img = if files.panorama.ends_with(".ctn") {
        RgbImage::from_tensor(&RawTensor::read(root.join(&files.panorama))?)?
    } else {
        read_image(root.join(&files.panorama))?
    };
    let masks = files
        .masks
        .iter()
        .map(|m| read_mask_png(root.join(m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SamplePair {
        video_with_subject: read_video(root, &files.video_with)?,
        video_without_subject: read_video(root, &files.video_without)?,
        subject_masks: masks,
        panorama: Panorama::new(pano_img)?,
        panorama_eye: Vec3::from(meta.panorama_eye),
        trajectory: Trajectory::read(root.join(&files.trajectory))?,
        movement: meta.movement,
        prompt_tag: meta.prompt_tag,
        scene_seed: meta.scene_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory_gen::MovementKind;

    fn small() -> PairConfig {
        PairConfig {
            frames: 5,
            width: 24,
            height: 24,
            pano_h: 32,
            ..PairConfig::default()
        }
    }

    #[test]
    fn pairs_pass_audit() {
        for i in 0..4 {
            let p = make_sample_pair(i, 100 + i, &small()).unwrap();
            assert!(p.audit().is_empty(), "{:?}", p.audit());
        }
    }

    #[test]
    fn audit_catches_background_change() {
        let mut p = make_sample_pair(1, 2, &small()).unwrap();
        let mut frames = p.video_without_subject.clone().into_frames();
        let idx = p.subject_masks[0].bits().iter().position(|b| !b).unwrap();
        frames[0].data_mut()[idx * 3] += 0.25;
        p.video_without_subject = Video::new(frames).unwrap();
        assert_eq!(p.audit().len(), 1);
    }

    #[test]
    fn seeds_are_spread() {
        let c = DatasetConfig::default();
        assert_eq!(c.scene_seed(0), c.scene_seed(8));
        assert_ne!(c.scene_seed(0), c.scene_seed(1));
        let kinds: std::collections::HashSet<_> = (0..200)
            .map(|i| {
                let s = build_scene(c.scene_seed(i));
                sample_movement(c.movement_seed(i), s.subject.focus(), s.subject.facing, &SamplerConfig::default())
                    .unwrap()
                    .0
                    .kind
            })
            .collect();
        assert_eq!(kinds.len(), MovementKind::ALL.len());
    }
}
