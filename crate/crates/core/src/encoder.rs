//! Implicit 3D scene features: the encoder interface, a frozen toy backend,
//! a file-backed backend for externally computed features, camera/image
//! fusion and the projection into model tokens.

use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{yaw_pitch_to_world, Vec3};
use crate::io::TensorBundle;
use crate::panorama::{PerspectiveView, SceneContextSet};
use crate::tape::{Tape, Var};

pub const DEFAULT_FEATURE_DIM: usize = 64;
pub const DEFAULT_FEATURE_GRID: (usize, usize) = (4, 4);
pub const LN_EPS: f64 = 1e-5;
/// Inputs of the toy encoder's frozen map: RGB, ray direction, sin/cos yaw.
const TOY_INPUTS: usize = 8;

/// Per-view image features (`V × k × D`) and camera features (`V × 1 × D`)
/// on a `grid_h × grid_w = k` spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitFeatures {
    pub image_features: Array3<f64>,
    pub camera_features: Array3<f64>,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl ImplicitFeatures {
    pub fn new(image_features: Array3<f64>, camera_features: Array3<f64>, grid_h: usize, grid_w: usize) -> Result<Self> {
        let (v, k, d) = image_features.dim();
        if k != grid_h * grid_w {
            return Err(Error::shape(format!("{k} tokens per view do not fill a {grid_h}x{grid_w} grid")));
        }
        if camera_features.dim() != (v, 1, d) {
            return Err(Error::shape(format!(
                "camera features {:?} do not match image features {:?}",
                camera_features.dim(),
                image_features.dim()
            )));
        }
        if image_features.iter().chain(camera_features.iter()).any(|x| !x.is_finite()) {
            return Err(Error::shape("features contain NaN or infinite entries".to_string()));
        }
        Ok(Self {
            image_features,
            camera_features,
            grid_h,
            grid_w,
        })
    }

    pub fn num_views(&self) -> usize {
        self.image_features.dim().0
    }

    pub fn dim(&self) -> usize {
        self.image_features.dim().2
    }

    /// Reorders views so that position `i` holds view `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ImplicitFeatures {
        ImplicitFeatures {
            image_features: self.image_features.select(Axis(0), perm),
            camera_features: self.camera_features.select(Axis(0), perm),
            grid_h: self.grid_h,
            grid_w: self.grid_w,
        }
    }

    pub fn to_bundle(&self, backend: &str) -> TensorBundle {
        let meta = FeatureFileMeta {
            backend: backend.to_string(),
            grid_h: self.grid_h,
            grid_w: self.grid_w,
        };
        let mut b = TensorBundle {
            metadata: serde_json::to_string(&meta).expect("plain struct serialises"),
            ..TensorBundle::default()
        };
        let (v, k, d) = self.image_features.dim();
        b.insert_f64("image_features", vec![v, k, d], self.image_features.iter().copied().collect())
            .expect("dims match data");
        b.insert_f64("camera_features", vec![v, 1, d], self.camera_features.iter().copied().collect())
            .expect("dims match data");
        b
    }

    pub fn from_bundle(b: &TensorBundle) -> Result<Self> {
        let meta: FeatureFileMeta = serde_json::from_str(&b.metadata)?;
        let load = |name: &str| -> Result<Array3<f64>> {
            let (dims, data) = b.get_f64(name)?;
            let [a, c, d] = dims else {
                return Err(Error::shape(format!("{name} must have 3 dims, found {dims:?}")));
            };
            Array3::from_shape_vec((*a, *c, *d), data.to_vec()).map_err(|e| Error::shape(e.to_string()))
        };
        ImplicitFeatures::new(load("image_features")?, load("camera_features")?, meta.grid_h, meta.grid_w)
    }

    pub fn write(&self, path: impl AsRef<Path>, backend: &str) -> Result<()> {
        self.to_bundle(backend).write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bundle(&TensorBundle::read(path)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureFileMeta {
    backend: String,
    grid_h: usize,
    grid_w: usize,
}

/// Anything that turns a set of context views into implicit features.
pub trait EncoderBackend {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode(&self, views: &SceneContextSet) -> Result<ImplicitFeatures>;
}

/// Frozen random linear map over simple per-cell content and viewpoint cues.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    pub grid: (usize, usize),
    /// `8 × D`.
    weights: Array2<f64>,
}

impl ToyEncoder {
    pub fn new(dim: usize, grid: (usize, usize), seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = (3.0 / TOY_INPUTS as f64).sqrt();
        let weights = Array2::from_shape_fn((TOY_INPUTS, dim), |_| rng.random_range(-bound..bound));
        Self { grid, weights }
    }

    fn map(&self, input: &[f64; TOY_INPUTS]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, TOY_INPUTS), input).expect("fixed size");
        x.dot(&self.weights).into_raw_vec_and_offset().0
    }

    fn encode_view(&self, view: &PerspectiveView) -> Result<(Vec<f64>, Vec<f64>)> {
        let (gh, gw) = self.grid;
        let img = &view.image;
        let (w, h) = (img.width(), img.height());
        if w < gw || h < gh {
            return Err(Error::BadDims(format!("{w}x{h} view is smaller than the {gh}x{gw} grid")));
        }
        let rot = yaw_pitch_to_world(view.yaw.to_radians(), view.pitch.to_radians());
        let (sy, cy) = view.yaw.to_radians().sin_cos();
        let tan_half = (view.fov.to_radians() * 0.5).tan();
        let mut out = Vec::with_capacity(gh * gw * self.weights.ncols());
        for gy in 0..gh {
            let (y0, y1) = (gy * h / gh, (gy + 1) * h / gh);
            for gx in 0..gw {
                let (x0, x1) = (gx * w / gw, (gx + 1) * w / gw);
                let mut rgb = [0.0f64; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = img.get(x, y);
                        for c in 0..3 {
                            rgb[c] += p[c] as f64;
                        }
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                let u = (2.0 * (gx as f64 + 0.5) / gw as f64 - 1.0) * tan_half;
                let v = -(2.0 * (gy as f64 + 0.5) / gh as f64 - 1.0) * tan_half * h as f64 / w as f64;
                let dir = (rot * Vec3::new(u, v, -1.0)).normalize();
                out.extend(self.map(&[rgb[0] / n, rgb[1] / n, rgb[2] / n, dir.x, dir.y, dir.z, sy, cy]));
            }
        }
        let fwd = rot * Vec3::new(0.0, 0.0, -1.0);
        let cam = self.map(&[0.0, 0.0, 0.0, fwd.x, fwd.y, fwd.z, sy, cy]);
        Ok((out, cam))
    }
}

impl EncoderBackend for ToyEncoder {
    fn name(&self) -> &str {
        "toy"
    }

    fn dim(&self) -> usize {
        self.weights.ncols()
    }

    fn encode(&self, views: &SceneContextSet) -> Result<ImplicitFeatures> {
        if views.is_empty() {
            return Err(Error::EmptyOutput("cannot encode an empty context set".into()));
        }
        let (gh, gw) = self.grid;
        let d = self.dim();
        let v = views.len();
        let mut img = Vec::with_capacity(v * gh * gw * d);
        let mut cam = Vec::with_capacity(v * d);
        for view in &views.views {
            let (i, c) = self.encode_view(view)?;
            img.extend(i);
            cam.extend(c);
        }
        ImplicitFeatures::new(
            Array3::from_shape_vec((v, gh * gw, d), img).expect("sizes computed above"),
            Array3::from_shape_vec((v, 1, d), cam).expect("sizes computed above"),
            gh,
            gw,
        )
    }
}

/// Toy features with the default frozen map.
pub fn toy_encode(views: &SceneContextSet, d: usize, grid: (usize, usize)) -> Result<ImplicitFeatures> {
    ToyEncoder::new(d, grid, 0).encode(views)
}

/// Serves features computed elsewhere and stored in a tensor bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct FileEncoder {
    features: ImplicitFeatures,
}

impl FileEncoder {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            features: ImplicitFeatures::read(path)?,
        })
    }

    pub fn from_features(features: ImplicitFeatures) -> Self {
        Self { features }
    }
}

impl EncoderBackend for FileEncoder {
    fn name(&self) -> &str {
        "file"
    }

    fn dim(&self) -> usize {
        self.features.dim()
    }

    fn encode(&self, views: &SceneContextSet) -> Result<ImplicitFeatures> {
        if views.len() != self.features.num_views() {
            return Err(Error::LengthMismatch {
                left: views.len(),
                right: self.features.num_views(),
            });
        }
        Ok(self.features.clone())
    }
}

/// Adds each view's camera token to every spatial token of that view.
pub fn fuse(feats: &ImplicitFeatures) -> Result<Array3<f64>> {
    let (v, _, d) = feats.image_features.dim();
    if feats.camera_features.dim() != (v, 1, d) {
        return Err(Error::shape(format!(
            "camera features {:?} vs image features {:?}",
            feats.camera_features.dim(),
            feats.image_features.dim()
        )));
    }
    Ok(&feats.image_features + &feats.camera_features)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // exact for a == b, so constant fields survive interpolation bit for bit
    a + t * (b - a)
}

/// Bilinear resize of a `(gh·gw) × D` token grid to `th × tw`, sampling at
/// pixel centres with edge clamping.
pub fn interpolate_grid(grid: ArrayView2<f64>, gh: usize, gw: usize, th: usize, tw: usize) -> Result<Array2<f64>> {
    if grid.nrows() != gh * gw || gh == 0 || gw == 0 || th == 0 || tw == 0 {
        return Err(Error::shape(format!(
            "cannot resize {} tokens on a {gh}x{gw} grid to {th}x{tw}",
            grid.nrows()
        )));
    }
    let d = grid.ncols();
    let src = |len: usize, out: usize, i: usize| -> (usize, usize, f64) {
        let x = ((i as f64 + 0.5) * len as f64 / out as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, x - i0 as f64)
    };
    let mut out = Array2::zeros((th * tw, d));
    for oy in 0..th {
        let (y0, y1, fy) = src(gh, th, oy);
        for ox in 0..tw {
            let (x0, x1, fx) = src(gw, tw, ox);
            for c in 0..d {
                let top = lerp(grid[[y0 * gw + x0, c]], grid[[y0 * gw + x1, c]], fx);
                let bot = lerp(grid[[y1 * gw + x0, c]], grid[[y1 * gw + x1, c]], fx);
                out[[oy * tw + ox, c]] = lerp(top, bot, fy);
            }
        }
    }
    Ok(out)
}

/// Resizes every view of `fused` to `target` and gathers non-overlapping
/// `patch × patch` windows into rows of length `patch²·D` (row-major over
/// the window, channels innermost). Rows are ordered view, row, column.
pub fn prepare_implicit(fused: &Array3<f64>, grid: (usize, usize), target: (usize, usize), patch: usize) -> Result<Array2<f64>> {
    let (v, k, d) = fused.dim();
    let (th, tw) = target;
    if patch == 0 || th % patch != 0 || tw % patch != 0 {
        return Err(Error::shape(format!("target {th}x{tw} is not divisible by patch {patch}")));
    }
    if k != grid.0 * grid.1 {
        return Err(Error::shape(format!("{k} tokens do not fill a {}x{} grid", grid.0, grid.1)));
    }
    let (oh, ow) = (th / patch, tw / patch);
    let mut out = Array2::zeros((v * oh * ow, patch * patch * d));
    for view in 0..v {
        let resized = interpolate_grid(fused.index_axis(Axis(0), view), grid.0, grid.1, th, tw)?;
        for py in 0..oh {
            for px in 0..ow {
                let row = view * oh * ow + py * ow + px;
                for wy in 0..patch {
                    for wx in 0..patch {
                        let src = (py * patch + wy) * tw + px * patch + wx;
                        let dst = (wy * patch + wx) * d;
                        out.slice_mut(s![row, dst..dst + d]).assign(&resized.row(src));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Learnable patch map and layer norm turning implicit features into tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitProjection {
    /// `patch²·D × d`.
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
    pub ln_gamma: Array2<f64>,
    pub ln_beta: Array2<f64>,
}

impl ImplicitProjection {
    /// Small uniform weights, zero bias, identity norm.
    pub fn init(feature_dim: usize, patch: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let fan_in = patch * patch * feature_dim;
        let bound = (1.0 / fan_in as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((fan_in, hidden), |_| rng.random_range(-bound..bound)),
            bias: Array2::zeros((1, hidden)),
            ln_gamma: Array2::ones((1, hidden)),
            ln_beta: Array2::zeros((1, hidden)),
        }
    }
}

/// Tape form of the projection; `vars` are weight, bias, gamma, beta.
pub fn project_on_tape(tape: &mut Tape, prepared: Var, vars: [Var; 4]) -> Var {
    let [w, b, g, beta] = vars;
    let lin = tape.matmul(prepared, w);
    let lin = tape.add_row(lin, b);
    tape.layer_norm(lin, g, beta, LN_EPS)
}

/// `V × (th/patch · tw/patch) × d` tokens from fused features.
pub fn project_to_tokens(
    fused: &Array3<f64>,
    grid: (usize, usize),
    target: (usize, usize),
    patch: usize,
    proj: &ImplicitProjection,
) -> Result<Array3<f64>> {
    let prepared = prepare_implicit(fused, grid, target, patch)?;
    if prepared.ncols() != proj.weight.nrows() {
        return Err(Error::shape(format!(
            "projection expects {} inputs, features give {}",
            proj.weight.nrows(),
            prepared.ncols()
        )));
    }
    let mut tape = Tape::new();
    let x = tape.constant(prepared);
    let vars = [
        tape.constant(proj.weight.clone()),
        tape.constant(proj.bias.clone()),
        tape.constant(proj.ln_gamma.clone()),
        tape.constant(proj.ln_beta.clone()),
    ];
    let y = project_on_tape(&mut tape, x, vars);
    let v = fused.dim().0;
    let per_view = (target.0 / patch) * (target.1 / patch);
    Ok(tape
        .value(y)
        .clone()
        .into_shape_with_order((v, per_view, proj.weight.ncols()))
        .expect("row count is views × tokens"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::RgbImage;
    use crate::panorama::PerspectiveView;
    use approx::assert_abs_diff_eq;

    fn view(img: RgbImage, yaw: f64) -> PerspectiveView {
        PerspectiveView {
            image: img,
            yaw,
            pitch: 0.0,
            fov: 90.0,
        }
    }

    fn textured(seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(16, 16, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn yaw_changes_camera_features_only() {
        let img = textured(1);
        let set = SceneContextSet {
            views: vec![view(img.clone(), 0.0), view(img, 40.0)],
            start_yaw: 0.0,
        };
        let f = toy_encode(&set, 16, (4, 4)).unwrap();
        let c0 = f.camera_features.index_axis(Axis(0), 0);
        let c1 = f.camera_features.index_axis(Axis(0), 1);
        assert!(c0.iter().zip(c1.iter()).any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn constant_views_vary_only_through_rays() {
        let set = SceneContextSet {
            views: vec![view(RgbImage::filled(16, 16, [0.3, 0.6, 0.2]), 10.0)],
            start_yaw: 10.0,
        };
        let enc = ToyEncoder::new(8, (2, 2), 0);
        let f = enc.encode(&set).unwrap();
        // Differences between cells equal the map applied to the ray change alone.
        let rot = yaw_pitch_to_world(10f64.to_radians(), 0.0);
        let ray = |u: f64, v: f64| (rot * Vec3::new(u, v, -1.0)).normalize();
        let (a, b) = (ray(-0.5, 0.5), ray(0.5, 0.5));
        let expect = enc.map(&[0.0, 0.0, 0.0, b.x - a.x, b.y - a.y, b.z - a.z, 0.0, 0.0]);
        for c in 0..8 {
            let got = f.image_features[[0, 1, c]] - f.image_features[[0, 0, c]];
            assert_abs_diff_eq!(got, expect[c], epsilon = 1e-12);
        }
    }

    #[test]
    fn toy_encoding_is_deterministic() {
        let set = SceneContextSet {
            views: vec![view(textured(3), 0.0), view(textured(4), 90.0)],
            start_yaw: 0.0,
        };
        assert_eq!(toy_encode(&set, 8, (4, 4)).unwrap(), toy_encode(&set, 8, (4, 4)).unwrap());
    }

    #[test]
    fn fuse_examples() {
        let img = Array3::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cam = Array3::from_shape_vec((1, 1, 2), vec![10.0, 20.0]).unwrap();
        let f = ImplicitFeatures::new(img.clone(), cam.clone(), 1, 2).unwrap();
        assert_eq!(fuse(&f).unwrap().into_raw_vec_and_offset().0, vec![11.0, 22.0, 13.0, 24.0]);
        let z = ImplicitFeatures::new(img.clone(), Array3::zeros((1, 1, 2)), 1, 2).unwrap();
        assert_eq!(fuse(&z).unwrap(), img);
        let scaled = ImplicitFeatures::new(&img * 3.0, &cam * 3.0, 1, 2).unwrap();
        let lhs = fuse(&scaled).unwrap();
        let rhs = fuse(&f).unwrap() * 3.0;
        assert!(lhs.iter().zip(rhs.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn bad_shapes_are_rejected() {
        assert!(ImplicitFeatures::new(Array3::zeros((2, 4, 3)), Array3::zeros((2, 1, 3)), 3, 3).is_err());
        assert!(ImplicitFeatures::new(Array3::zeros((2, 4, 3)), Array3::zeros((1, 1, 3)), 2, 2).is_err());
        let mut bad = Array3::zeros((1, 1, 1));
        bad[[0, 0, 0]] = f64::NAN;
        assert!(ImplicitFeatures::new(bad, Array3::zeros((1, 1, 1)), 1, 1).is_err());
    }

    #[test]
    fn averaging_projection_matches_hand_computation() {
        // 4x4 grid, D = 2, no-op resize, weights average each channel over the
        // 2x2 window, identity norm.
        let d = 2;
        let fused = Array3::from_shape_fn((1, 16, d), |(_, j, c)| (j * 3 + c * 7 % 5) as f64 * 0.25 + c as f64);
        let mut weight = Array2::zeros((4 * d, d));
        for w in 0..4 {
            for c in 0..d {
                weight[[w * d + c, c]] = 0.25;
            }
        }
        let proj = ImplicitProjection {
            weight,
            bias: Array2::zeros((1, d)),
            ln_gamma: Array2::ones((1, d)),
            ln_beta: Array2::zeros((1, d)),
        };
        let out = project_to_tokens(&fused, (4, 4), (4, 4), 2, &proj).unwrap();
        assert_eq!(out.dim(), (1, 4, d));
        for py in 0..2 {
            for px in 0..2 {
                let mut mean = [0.0; 2];
                for wy in 0..2 {
                    for wx in 0..2 {
                        let j = (2 * py + wy) * 4 + 2 * px + wx;
                        for c in 0..d {
                            mean[c] += fused[[0, j, c]] / 4.0;
                        }
                    }
                }
                let mu = (mean[0] + mean[1]) / 2.0;
                let var = ((mean[0] - mu).powi(2) + (mean[1] - mu).powi(2)) / 2.0;
                for c in 0..d {
                    let expect = (mean[c] - mu) / (var + LN_EPS).sqrt();
                    assert_abs_diff_eq!(out[[0, py * 2 + px, c]], expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_field_survives_interpolation() {
        let grid = Array2::from_elem((6, 3), 0.1f64 + 0.2);
        let up = interpolate_grid(grid.view(), 2, 3, 8, 8).unwrap();
        assert!(up.iter().all(|x| x.to_bits() == (0.1f64 + 0.2).to_bits()));
    }

    #[test]
    fn token_count_per_view() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fused = Array3::from_shape_fn((3, 16, 4), |_| rng.random_range(-1.0..1.0));
        let proj = ImplicitProjection::init(4, 2, 8, &mut rng);
        for (h, w) in [(32usize, 32usize), (64, 32), (48, 80)] {
            let out = project_to_tokens(&fused, (4, 4), (h / 8, w / 8), 2, &proj).unwrap();
            assert_eq!(out.dim(), (3, (h / 16) * (w / 16), 8));
            assert!(out.iter().all(|x| x.is_finite()));
        }
        assert!(project_to_tokens(&fused, (4, 4), (3, 4), 2, &proj).is_err());
    }

    #[test]
    fn projection_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = Array3::from_shape_fn((4, 4, 3), |_| rng.random_range(-1.0..1.0));
        let cam = Array3::from_shape_fn((4, 1, 3), |_| rng.random_range(-1.0..1.0));
        let f = ImplicitFeatures::new(img, cam, 2, 2).unwrap();
        let proj = ImplicitProjection::init(3, 2, 6, &mut rng);
        let perm = [0, 3, 1, 2];
        let a = project_to_tokens(&fuse(&f.permuted(&perm)).unwrap(), (2, 2), (4, 4), 2, &proj).unwrap();
        let b = project_to_tokens(&fuse(&f).unwrap(), (2, 2), (4, 4), 2, &proj).unwrap();
        assert_eq!(a, b.select(Axis(0), &perm));
    }

    #[test]
    fn constant_input_gives_finite_tokens() {
        let fused = Array3::from_elem((1, 4, 2), 5.0);
        let proj = ImplicitProjection {
            weight: Array2::from_elem((8, 3), 1.0),
            bias: Array2::zeros((1, 3)),
            ln_gamma: Array2::ones((1, 3)),
            ln_beta: Array2::zeros((1, 3)),
        };
        let out = project_to_tokens(&fused, (2, 2), (2, 2), 2, &proj).unwrap();
        assert!(out.iter().all(|x| x.is_finite() && *x == 0.0));
    }

    #[test]
    fn projection_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fused = Array3::from_shape_fn((2, 4, 3), |_| rng.random_range(-1.0..1.0));
        let prepared = prepare_implicit(&fused, (2, 2), (4, 4), 2).unwrap();
        let mut proj = ImplicitProjection::init(3, 2, 5, &mut rng);
        proj.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        proj.ln_gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
        proj.ln_beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let target = Array2::from_shape_fn((prepared.nrows(), 5), |_| rng.random_range(-1.0..1.0));
        let loss = |p: &ImplicitProjection, grads: bool| {
            let mut t = Tape::new();
            let x = t.constant(prepared.clone());
            let vars = [
                t.param(p.weight.clone()),
                t.param(p.bias.clone()),
                t.param(p.ln_gamma.clone()),
                t.param(p.ln_beta.clone()),
            ];
            let y = project_on_tape(&mut t, x, vars);
            let tg = t.constant(target.clone());
            let diff = t.sub(y, tg);
            let l = t.mean_square(diff);
            let g = grads.then(|| {
                let g = t.backward(l);
                vars.map(|v| g.get(v, t.shape(v)))
            });
            (t.scalar(l), g)
        };
        let analytic = loss(&proj, true).1.unwrap();
        let h = 1e-5;
        for (k, a) in analytic.iter().enumerate() {
            for idx in 0..a.len() {
                let (r, c) = (idx / a.ncols(), idx % a.ncols());
                let bump = |delta: f64| {
                    let mut p = proj.clone();
                    let m = [&mut p.weight, &mut p.bias, &mut p.ln_gamma, &mut p.ln_beta];
                    let target = m.into_iter().nth(k).unwrap();
                    target[[r, c]] += delta;
                    loss(&p, false).0
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                let err = (a[[r, c]] - numeric).abs() / a[[r, c]].abs().max(numeric.abs()).max(1e-8);
                assert!(err < 1e-4, "group {k} [{r},{c}] {} vs {numeric}", a[[r, c]]);
            }
        }
    }

    #[test]
    fn feature_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Array3::from_shape_fn((2, 4, 3), |_| rng.random_range(-1.0..1.0));
        let cam = Array3::from_shape_fn((2, 1, 3), |_| rng.random_range(-1.0..1.0));
        let f = ImplicitFeatures::new(img, cam, 2, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("feat.ctb");
        f.write(&p, "test").unwrap();
        let enc = FileEncoder::open(&p).unwrap();
        let set = SceneContextSet {
            views: vec![view(textured(0), 0.0), view(textured(1), 180.0)],
            start_yaw: 0.0,
        };
        assert_eq!(enc.encode(&set).unwrap(), f);
        assert_eq!(enc.dim(), 3);
    }
}
