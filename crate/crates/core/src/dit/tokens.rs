use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{fuse, prepare_implicit, ImplicitFeatures};
use crate::error::{Error, Result};
use crate::geometry::Trajectory;
use crate::image::{RgbImage, Video};
use crate::panorama::SceneContextSet;
use crate::tape::{Tape, Var};

use super::{ModelConfig, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Video,
    ImageContext,
    ImplicitContext,
}

impl Segment {
    pub fn index(self) -> usize {
        match self {
            Segment::Video => 0,
            Segment::ImageContext => 1,
            Segment::ImplicitContext => 2,
        }
    }
}

/// Non-overlapping `patch × patch` windows of each frame as rows, ordered
/// frame, row, column; pixels are mapped from `[0, 1]` to `[-1, 1]` and laid
/// out row-major with channels innermost.
pub fn patchify(frames: &[RgbImage], patch: usize) -> Result<Array2<f64>> {
    let Some(first) = frames.first() else {
        return Ok(Array2::zeros((0, patch * patch * 3)));
    };
    let (w, h) = (first.width(), first.height());
    if patch == 0 || w % patch != 0 || h % patch != 0 {
        return Err(Error::BadDims(format!("{w}x{h} frames are not divisible by patch {patch}")));
    }
    if frames.iter().any(|f| (f.width(), f.height()) != (w, h)) {
        return Err(Error::BadDims("frames differ in size".into()));
    }
    let (gh, gw) = (h / patch, w / patch);
    let pd = patch * patch * 3;
    let mut out = Array2::zeros((frames.len() * gh * gw, pd));
    for (fi, frame) in frames.iter().enumerate() {
        for py in 0..gh {
            for px in 0..gw {
                let mut row = out.row_mut((fi * gh + py) * gw + px);
                for y in 0..patch {
                    for x in 0..patch {
                        let p = frame.get(px * patch + x, py * patch + y);
                        for c in 0..3 {
                            row[(y * patch + x) * 3 + c] = 2.0 * p[c] as f64 - 1.0;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`], clamping pixels to `[0, 1]`.
pub fn unpatchify(rows: &Array2<f64>, frames: usize, height: usize, width: usize, patch: usize) -> Result<Video> {
    if patch == 0 || height % patch != 0 || width % patch != 0 {
        return Err(Error::BadDims(format!("{width}x{height} is not divisible by patch {patch}")));
    }
    let (gh, gw) = (height / patch, width / patch);
    if rows.dim() != (frames * gh * gw, patch * patch * 3) {
        return Err(Error::shape(format!(
            "{:?} patch rows do not form {frames} frames of {width}x{height}",
            rows.dim()
        )));
    }
    let out = (0..frames)
        .map(|fi| {
            let mut img = RgbImage::new(width, height);
            for py in 0..gh {
                for px in 0..gw {
                    let row = rows.row((fi * gh + py) * gw + px);
                    for y in 0..patch {
                        for x in 0..patch {
                            let k = (y * patch + x) * 3;
                            let rgb = [0, 1, 2].map(|c| ((row[k + c] + 1.0) * 0.5).clamp(0.0, 1.0) as f32);
                            img.set(px * patch + x, py * patch + y, rgb);
                        }
                    }
                }
            }
            img
        })
        .collect();
    Video::new(out)
}

/// Row-major `[R|t]` of every pose, `f × 12`.
pub fn encode_camera_inputs(traj: &Trajectory) -> Array2<f64> {
    let rows: Vec<f64> = traj.poses().iter().flat_map(|p| p.to_row_major()).collect();
    Array2::from_shape_vec((traj.frame_count(), 12), rows).expect("12 values per pose")
}

/// Per-frame camera embeddings, `f × d`. Expects an already normalised
/// trajectory with the model's frame count.
pub fn encode_camera(config: &ModelConfig, params: &Params, traj: &Trajectory) -> Result<Array2<f64>> {
    if traj.frame_count() != config.frames {
        return Err(Error::LengthMismatch {
            left: traj.frame_count(),
            right: config.frames,
        });
    }
    Ok(encode_camera_inputs(traj).dot(params.get("camera.w")?) + params.get("camera.b")?)
}

/// Keeps view 0 in place and shuffles the rest uniformly, applying the same
/// permutation to the views and to their features.
pub fn shuffle_context(
    views: &SceneContextSet,
    feats: &ImplicitFeatures,
    rng: &mut impl Rng,
) -> Result<(SceneContextSet, ImplicitFeatures, Vec<usize>)> {
    if views.len() != feats.num_views() {
        return Err(Error::LengthMismatch {
            left: views.len(),
            right: feats.num_views(),
        });
    }
    let perm = context_permutation(views.len(), rng);
    Ok((views.permuted(&perm), feats.permuted(&perm), perm))
}

/// Fisher–Yates over indices `1..v`; index 0 stays first.
pub(crate) fn context_permutation(v: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..v).collect();
    for i in (2..v).rev() {
        let j = rng.random_range(1..=i);
        perm.swap(i, j);
    }
    perm
}

/// Per-sample conditioning in model-ready form: context patches and prepared
/// implicit rows (view-major blocks of `g` rows each), camera inputs and the
/// prompt tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub context_patches: Array2<f64>,
    pub implicit_rows: Array2<f64>,
    /// `f × 12` normalised camera poses.
    pub camera: Array2<f64>,
    pub prompt_tag: usize,
}

impl Conditioning {
    pub fn new(
        config: &ModelConfig,
        views: &SceneContextSet,
        feats: &ImplicitFeatures,
        normalized: &Trajectory,
        prompt_tag: usize,
    ) -> Result<Self> {
        if views.len() != config.context_views || feats.num_views() != config.context_views {
            return Err(Error::LengthMismatch {
                left: views.len().min(feats.num_views()),
                right: config.context_views,
            });
        }
        if normalized.frame_count() != config.frames {
            return Err(Error::LengthMismatch {
                left: normalized.frame_count(),
                right: config.frames,
            });
        }
        if let Some((w, h)) = views.resolution() {
            if (w, h) != (config.width, config.height) {
                return Err(Error::BadDims(format!(
                    "context views are {w}x{h}, the model expects {}x{}",
                    config.width, config.height
                )));
            }
        }
        if feats.dim() != config.implicit_dim || (feats.grid_h, feats.grid_w) != config.implicit_grid {
            return Err(Error::shape(format!(
                "features are {}x{}x{}, the model expects {:?}x{}",
                feats.grid_h,
                feats.grid_w,
                feats.dim(),
                config.implicit_grid,
                config.implicit_dim
            )));
        }
        if prompt_tag >= config.prompt_vocab {
            return Err(Error::Config(format!(
                "prompt tag {prompt_tag} is outside the vocabulary of {}",
                config.prompt_vocab
            )));
        }
        let images: Vec<RgbImage> = views.views.iter().map(|v| v.image.clone()).collect();
        let context_patches = if images.is_empty() {
            Array2::zeros((0, config.patch_dim()))
        } else {
            patchify(&images, config.patch)?
        };
        let implicit_rows = if feats.num_views() == 0 {
            Array2::zeros((0, 4 * config.implicit_dim))
        } else {
            prepare_implicit(&fuse(feats)?, config.implicit_grid, config.implicit_target(), 2)?
        };
        Ok(Self {
            context_patches,
            implicit_rows,
            camera: encode_camera_inputs(normalized),
            prompt_tag,
        })
    }

    /// Reorders view blocks so that block `i` holds view `perm[i]`.
    pub fn permuted(&self, perm: &[usize], tokens_per_view: usize) -> Conditioning {
        let rows = |a: &Array2<f64>| {
            let idx: Vec<usize> = perm
                .iter()
                .flat_map(|&v| v * tokens_per_view..(v + 1) * tokens_per_view)
                .collect();
            a.select(Axis(0), &idx)
        };
        Conditioning {
            context_patches: rows(&self.context_patches),
            implicit_rows: rows(&self.implicit_rows),
            camera: self.camera.clone(),
            prompt_tag: self.prompt_tag,
        }
    }
}

/// Assembled model input.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    /// `N × d`, segment embeddings and camera embeddings included.
    pub tokens: Array2<f64>,
    /// `(frame, row, col)` per token.
    pub positions: Vec<[usize; 3]>,
    pub segments: Vec<Segment>,
    /// `N × d`; zero on every context row.
    pub camera: Array2<f64>,
    pub prompt_tag: usize,
}

/// Positions and segments of the `[video | I_t | F_t]` layout.
pub fn sequence_layout(config: &ModelConfig) -> (Vec<[usize; 3]>, Vec<Segment>) {
    let (gh, gw) = config.grid();
    let (f, v) = (config.frames, config.context_views);
    let mut pos = Vec::with_capacity(config.sequence_len());
    let mut seg = Vec::with_capacity(config.sequence_len());
    let mut push = |frame: usize, s: Segment| {
        for r in 0..gh {
            for c in 0..gw {
                pos.push([frame, r, c]);
                seg.push(s);
            }
        }
    };
    for i in 0..f {
        push(i, Segment::Video);
    }
    for i in 0..v {
        push(f + i, Segment::ImageContext);
    }
    for i in 0..v {
        let frame = if config.shared_implicit_frame_ids { f + i } else { f + v + i };
        push(frame, Segment::ImplicitContext);
    }
    (pos, seg)
}

/// Tape form of assembly. Returns the token matrix and the full camera
/// matrix (zeros on context rows).
pub(crate) fn assemble_on_tape(
    tape: &mut Tape,
    config: &ModelConfig,
    vars: &BTreeMap<String, Var>,
    video: Var,
    image_ctx: Var,
    implicit_ctx: Var,
    camera_per_frame: Var,
) -> (Var, Var) {
    let (_, segments) = sequence_layout(config);
    let g = config.tokens_per_frame();
    let frame_rows: Vec<usize> = (0..config.video_tokens()).map(|i| i / g).collect();
    let cam_video = tape.gather_rows(camera_per_frame, &frame_rows);
    let ctx_rows = config.sequence_len() - config.video_tokens();
    let camera_full = if ctx_rows > 0 {
        let zeros = tape.constant(Array2::zeros((ctx_rows, config.hidden)));
        tape.concat_rows(&[cam_video, zeros])
    } else {
        cam_video
    };
    let content = tape.concat_rows(&[video, image_ctx, implicit_ctx]);
    let seg_idx: Vec<usize> = segments.iter().map(|s| s.index()).collect();
    let seg_rows = tape.gather_rows(vars["embed.segment"], &seg_idx);
    let with_seg = tape.add(content, seg_rows);
    (tape.add(with_seg, camera_full), camera_full)
}

/// Concatenates `[video | I_t | F_t]` tokens, adds segment embeddings and
/// broadcasts each frame's camera embedding over that frame's tokens.
pub fn assemble_sequence(
    config: &ModelConfig,
    params: &Params,
    video_tokens: &Array2<f64>,
    image_tokens: &Array2<f64>,
    implicit_tokens: &Array2<f64>,
    camera_emb: &Array2<f64>,
    prompt_tag: usize,
) -> Result<TokenSequence> {
    let d = config.hidden;
    let ctx = config.context_views * config.tokens_per_frame();
    let expect = [
        ("video tokens", video_tokens.dim(), (config.video_tokens(), d)),
        ("image tokens", image_tokens.dim(), (ctx, d)),
        ("implicit tokens", implicit_tokens.dim(), (ctx, d)),
        ("camera embedding", camera_emb.dim(), (config.frames, d)),
    ];
    for (name, got, want) in expect {
        if got != want {
            return Err(Error::shape(format!("{name}: expected {want:?}, got {got:?}")));
        }
    }
    let mut tape = Tape::new();
    let vars = params.on_tape(&mut tape, false);
    let v = tape.constant(video_tokens.clone());
    let i = tape.constant(image_tokens.clone());
    let f = tape.constant(implicit_tokens.clone());
    let c = tape.constant(camera_emb.clone());
    let (tokens, camera) = assemble_on_tape(&mut tape, config, &vars, v, i, f, c);
    let (positions, segments) = sequence_layout(config);
    Ok(TokenSequence {
        tokens: tape.value(tokens).clone(),
        positions,
        segments,
        camera: tape.value(camera).clone(),
        prompt_tag,
    })
}

/// Patch-embedded video tokens before positions and segments are added,
/// `f·g × d`.
pub fn tokenize_video(config: &ModelConfig, params: &Params, video: &Video) -> Result<Array2<f64>> {
    let (f, h, w) = video.dims();
    if (h, w) != (config.height, config.width) {
        return Err(Error::BadDims(format!("video is {w}x{h}, the model expects {}x{}", config.width, config.height)));
    }
    if f != config.frames {
        return Err(Error::LengthMismatch { left: f, right: config.frames });
    }
    embed_patches(params, &patchify(video.frames(), config.patch)?)
}

/// Context-image tokens through the same patch map as the video, `V·g × d`.
pub fn tokenize_context_images(config: &ModelConfig, params: &Params, views: &SceneContextSet) -> Result<Array2<f64>> {
    if views.is_empty() {
        return Ok(Array2::zeros((0, config.hidden)));
    }
    if views.resolution() != Some((config.width, config.height)) {
        return Err(Error::BadDims(format!(
            "context views are {:?}, the model expects {}x{}",
            views.resolution(),
            config.width,
            config.height
        )));
    }
    let images: Vec<RgbImage> = views.views.iter().map(|v| v.image.clone()).collect();
    embed_patches(params, &patchify(&images, config.patch)?)
}

fn embed_patches(params: &Params, patches: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(patches.dot(params.get("embed.patch.w")?) + params.get("embed.patch.b")?)
}
