//! Equirectangular panoramas and their projection to perspective views.
//!
//! Texel `(x, y)` of a `W × H` panorama has its centre at longitude
//! `λ = 2π (x + ½)/W − π` and latitude `φ = π/2 − π (y + ½)/H`. Longitude
//! zero looks down world `-z`, `+π/2` looks down `+x`. A view direction is
//! `(cos φ sin λ, sin φ, −cos φ cos λ)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{yaw_pitch_to_world, Vec3};
use crate::image::RgbImage;

pub const DEFAULT_CONTEXT_VIEWS: usize = 20;
pub const CONTEXT_FOV_DEG: f64 = 90.0;
pub const DEFAULT_PANORAMA_HEIGHT: usize = 512;

/// Full 360°×180° equirectangular image (`width == 2 * height`).
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    image: RgbImage,
}

impl Panorama {
    pub fn new(image: RgbImage) -> Result<Self> {
        if image.height() == 0 || image.width() != 2 * image.height() {
            return Err(Error::BadDims(format!(
                "equirectangular panorama must be 2:1, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(Self { image })
    }

    pub fn from_fn(height: usize, f: impl Fn(f64, f64) -> [f32; 3]) -> Result<Self> {
        let width = 2 * height;
        let img = RgbImage::from_fn(width, height, |x, y| {
            let (lon, lat) = texel_lonlat(x, y, width, height);
            f(lon, lat)
        });
        Self::new(img)
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn into_image(self) -> RgbImage {
        self.image
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Bilinear sample at (longitude, latitude) in radians, wrapping
    /// horizontally and clamping vertically.
    pub fn sample(&self, lon: f64, lat: f64) -> [f64; 3] {
        let w = self.width();
        let h = self.height();
        let u = (lon + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU);
        let x = u / std::f64::consts::TAU * w as f64 - 0.5;
        let y = (std::f64::consts::FRAC_PI_2 - lat) / std::f64::consts::PI * h as f64 - 0.5;

        let x0f = x.floor();
        let fx = x - x0f;
        let x0 = (x0f as i64).rem_euclid(w as i64) as usize;
        let x1 = (x0 + 1) % w;

        let y = y.clamp(0.0, (h - 1) as f64);
        let y0 = y.floor() as usize;
        let fy = y - y0 as f64;
        let y1 = (y0 + 1).min(h - 1);

        let p00 = self.image.get(x0, y0);
        let p10 = self.image.get(x1, y0);
        let p01 = self.image.get(x0, y1);
        let p11 = self.image.get(x1, y1);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            out[c] = top * (1.0 - fy) + bot * fy;
        }
        out
    }

    pub fn sample_dir(&self, d: &Vec3) -> [f64; 3] {
        let (lon, lat) = dir_to_lonlat(d);
        self.sample(lon, lat)
    }

    /// Shifts content by whole texel columns: the returned panorama at
    /// longitude `λ` shows this panorama at `λ + columns · 360°/W`.
    pub fn rotate_columns(&self, columns: i64) -> Panorama {
        let w = self.width();
        let img = RgbImage::from_fn(w, self.height(), |x, y| {
            self.image.get((x as i64 + columns).rem_euclid(w as i64) as usize, y)
        });
        Panorama { image: img }
    }

    pub fn downscale2(&self) -> Result<Panorama> {
        Panorama::new(self.image.downscale2()?)
    }
}

/// Centre of texel `(x, y)` as (longitude, latitude) in radians.
pub fn texel_lonlat(x: usize, y: usize, width: usize, height: usize) -> (f64, f64) {
    let lon = (x as f64 + 0.5) / width as f64 * std::f64::consts::TAU - std::f64::consts::PI;
    let lat = std::f64::consts::FRAC_PI_2 - (y as f64 + 0.5) / height as f64 * std::f64::consts::PI;
    (lon, lat)
}

pub fn lonlat_to_dir(lon: f64, lat: f64) -> Vec3 {
    let (sl, cl) = lon.sin_cos();
    let (sp, cp) = lat.sin_cos();
    Vec3::new(cp * sl, sp, -cp * cl)
}

pub fn dir_to_lonlat(d: &Vec3) -> (f64, f64) {
    let lon = d.x.atan2(-d.z);
    let lat = d.y.atan2((d.x * d.x + d.z * d.z).sqrt());
    (lon, lat)
}

/// Camera-frame ray through the centre of pixel `(col, row)` of a pinhole
/// camera with horizontal field of view `fov` (radians) and square pixels.
pub fn pinhole_ray(col: usize, row: usize, width: usize, height: usize, fov: f64) -> Vec3 {
    let tan_half = (fov * 0.5).tan();
    let x = (2.0 * (col as f64 + 0.5) / width as f64 - 1.0) * tan_half;
    let y = -(2.0 * (row as f64 + 0.5) / height as f64 - 1.0) * tan_half * height as f64 / width as f64;
    Vec3::new(x, y, -1.0)
}

/// A perspective image cut out of a panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveView {
    pub image: RgbImage,
    /// Degrees; positive turns toward increasing longitude.
    pub yaw: f64,
    /// Degrees; positive looks up.
    pub pitch: f64,
    /// Horizontal field of view, degrees.
    pub fov: f64,
}

/// Perspective views around a common viewpoint; view 0 matches the first
/// frame of the target video.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneContextSet {
    pub views: Vec<PerspectiveView>,
    pub start_yaw: f64,
}

impl SceneContextSet {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// `(width, height)` shared by all views.
    pub fn resolution(&self) -> Option<(usize, usize)> {
        self.views.first().map(|v| (v.image.width(), v.image.height()))
    }

    /// Reorders views so that position `i` holds view `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SceneContextSet {
        SceneContextSet {
            views: perm.iter().map(|&i| self.views[i].clone()).collect(),
            start_yaw: self.start_yaw,
        }
    }
}

pub fn equirect_to_perspective(
    pano: &Panorama,
    yaw: f64,
    pitch: f64,
    fov: f64,
    out_w: usize,
    out_h: usize,
) -> Result<PerspectiveView> {
    if !(fov > 0.0 && fov < 180.0) {
        return Err(Error::BadFov(fov));
    }
    if out_w == 0 || out_h == 0 {
        return Err(Error::EmptyOutput(format!("requested {out_w}x{out_h} view")));
    }
    let rot = yaw_pitch_to_world(yaw.to_radians(), pitch.to_radians());
    let fov_rad = fov.to_radians();
    let mut data = vec![0.0f32; out_w * out_h * 3];
    data.par_chunks_mut(out_w * 3).enumerate().for_each(|(row, line)| {
        for col in 0..out_w {
            let d = rot * pinhole_ray(col, row, out_w, out_h, fov_rad);
            let rgb = pano.sample_dir(&d);
            for c in 0..3 {
                line[col * 3 + c] = rgb[c] as f32;
            }
        }
    });
    Ok(PerspectiveView {
        image: RgbImage::from_raw(out_w, out_h, data)?,
        yaw,
        pitch,
        fov,
    })
}

/// `v` horizontal 90° views at `start_yaw + i · 360°/v`.
pub fn scene_context_from_panorama(
    pano: &Panorama,
    start_yaw: f64,
    v: usize,
    out_w: usize,
    out_h: usize,
) -> Result<SceneContextSet> {
    if v == 0 {
        return Err(Error::EmptyOutput("a context set needs at least one view".into()));
    }
    let step = 360.0 / v as f64;
    let views = (0..v)
        .map(|i| equirect_to_perspective(pano, start_yaw + i as f64 * step, 0.0, CONTEXT_FOV_DEG, out_w, out_h))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneContextSet { views, start_yaw })
}

/// Result of splatting perspective views back onto an equirectangular canvas.
#[derive(Debug, Clone)]
pub struct Accumulated {
    pub panorama: Panorama,
    /// Row-major `H × W`; true where at least one view pixel landed.
    pub coverage: Vec<bool>,
}

impl Accumulated {
    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.coverage[y * self.panorama.width() + x]
    }
}

/// Forward-splats every view pixel to its nearest texel, averaging overlaps.
pub fn perspective_to_equirect_accumulate(views: &SceneContextSet, pano_h: usize) -> Result<Accumulated> {
    if views.is_empty() {
        return Err(Error::EmptyOutput("no views to accumulate".into()));
    }
    if pano_h == 0 {
        return Err(Error::EmptyOutput("panorama height must be positive".into()));
    }
    let pano_w = 2 * pano_h;
    let mut sum = vec![0.0f64; pano_w * pano_h * 3];
    let mut count = vec![0u32; pano_w * pano_h];
    for view in &views.views {
        let rot = yaw_pitch_to_world(view.yaw.to_radians(), view.pitch.to_radians());
        let (w, h) = (view.image.width(), view.image.height());
        for row in 0..h {
            for col in 0..w {
                let d = rot * pinhole_ray(col, row, w, h, view.fov.to_radians());
                let (lon, lat) = dir_to_lonlat(&d);
                let u = (lon + std::f64::consts::PI) / std::f64::consts::TAU * pano_w as f64;
                let v = (std::f64::consts::FRAC_PI_2 - lat) / std::f64::consts::PI * pano_h as f64;
                let x = (u.floor() as i64).rem_euclid(pano_w as i64) as usize;
                let y = (v.floor().max(0.0) as usize).min(pano_h - 1);
                let idx = y * pano_w + x;
                let p = view.image.get(col, row);
                for c in 0..3 {
                    sum[idx * 3 + c] += p[c] as f64;
                }
                count[idx] += 1;
            }
        }
    }
    let data = sum
        .chunks_exact(3)
        .zip(&count)
        .flat_map(|(s, n)| {
            let k = if *n > 0 { 1.0 / *n as f64 } else { 0.0 };
            [(s[0] * k) as f32, (s[1] * k) as f32, (s[2] * k) as f32]
        })
        .collect();
    Ok(Accumulated {
        panorama: Panorama::new(RgbImage::from_raw(pano_w, pano_h, data)?)?,
        coverage: count.iter().map(|n| *n > 0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_pano(h: usize) -> Panorama {
        Panorama::from_fn(h, |lon, lat| {
            [
                (0.5 + 0.35 * lon.sin()) as f32,
                (0.5 + 0.35 * lat.sin()) as f32,
                (0.5 + 0.2 * (2.0 * lon).cos() * lat.cos()) as f32,
            ]
        })
        .unwrap()
    }

    /// Independent per-pixel mapping: offsets of the pixel ray from the view
    /// axis turned into longitude/latitude with explicit spherical trig.
    fn oracle_view(pano: &Panorama, yaw_deg: f64, pitch_deg: f64, fov_deg: f64, w: usize, h: usize) -> Vec<f64> {
        let (pw, ph) = (pano.width() as f64, pano.height() as f64);
        let t = (fov_deg.to_radians() / 2.0).tan();
        let (sb, cb) = pitch_deg.to_radians().sin_cos();
        let mut out = Vec::new();
        for i in 0..h {
            for j in 0..w {
                let a = ((j as f64 + 0.5) / w as f64 * 2.0 - 1.0) * t;
                let b = (1.0 - (i as f64 + 0.5) / h as f64 * 2.0) * t * (h as f64 / w as f64);
                // Ray (a, b, -1) tilted by the pitch about the camera x axis.
                let up = b * cb + sb;
                let fwd = cb - b * sb;
                let lon = yaw_deg.to_radians() + a.atan2(fwd);
                let lat = (up / (a * a + up * up + fwd * fwd).sqrt()).asin();
                let px = (lon / (2.0 * std::f64::consts::PI) + 0.5) * pw - 0.5;
                let py = (0.5 - lat / std::f64::consts::PI) * ph - 0.5;
                let py = py.max(0.0).min(ph - 1.0);
                let x0 = px.floor();
                let y0 = py.floor();
                let (fx, fy) = (px - x0, py - y0);
                let xi = |k: f64| (((k % pw) + pw) % pw) as usize;
                let yi = |k: f64| k.min(ph - 1.0) as usize;
                for c in 0..3 {
                    let g = |x: f64, y: f64| pano.image().get(xi(x), yi(y))[c] as f64;
                    out.push(
                        (1.0 - fy) * ((1.0 - fx) * g(x0, y0) + fx * g(x0 + 1.0, y0))
                            + fy * ((1.0 - fx) * g(x0, y0 + 1.0) + fx * g(x0 + 1.0, y0 + 1.0)),
                    );
                }
            }
        }
        out
    }

    #[test]
    fn panorama_must_be_two_to_one() {
        assert!(Panorama::new(RgbImage::new(10, 10)).is_err());
        assert!(Panorama::new(RgbImage::new(20, 10)).is_ok());
    }

    #[test]
    fn constant_panorama_gives_constant_view() {
        let c = [0.2f32, 0.4, 0.6];
        let pano = Panorama::new(RgbImage::filled(64, 32, c)).unwrap();
        let v = equirect_to_perspective(&pano, 37.0, 12.0, 75.0, 16, 9).unwrap();
        assert!(v.image.data().chunks(3).all(|p| p == c));
    }

    #[test]
    fn centre_pixel_samples_yaw_longitude() {
        let pano = gradient_pano(256);
        for yaw in [0.0, 18.0, 90.0, -140.0, 300.0] {
            let v = equirect_to_perspective(&pano, yaw, 0.0, 90.0, 33, 33).unwrap();
            let expect = pano.sample(f64::to_radians(yaw), 0.0);
            let got = v.image.get(16, 16);
            for c in 0..3 {
                assert!((got[c] as f64 - expect[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matches_spherical_trig_oracle() {
        let pano = gradient_pano(64);
        for (yaw, pitch, fov) in [(0.0, 0.0, 90.0), (33.0, 20.0, 60.0), (-170.0, -35.0, 120.0), (179.0, 0.0, 90.0)] {
            let v = equirect_to_perspective(&pano, yaw, pitch, fov, 8, 8).unwrap();
            let o = oracle_view(&pano, yaw, pitch, fov, 8, 8);
            let max = v
                .image
                .data()
                .iter()
                .zip(&o)
                .map(|(a, b)| (*a as f64 - b).abs())
                .fold(0.0, f64::max);
            assert!(max < 1e-6, "yaw {yaw} pitch {pitch}: {max}");
        }
    }

    #[test]
    fn horizontal_wrap_is_exact() {
        let pano = gradient_pano(32);
        for k in 0..50 {
            let lon = -3.0 + 0.13 * k as f64;
            let lat = -1.2 + 0.05 * k as f64;
            let a = pano.sample(lon, lat);
            let b = pano.sample(lon + std::f64::consts::TAU, lat);
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn yaw_equivariance() {
        let pano = gradient_pano(128);
        // 32 columns of 256 = 45 degrees.
        let rotated = pano.rotate_columns(32);
        let a = equirect_to_perspective(&pano, 60.0, 0.0, 90.0, 32, 32).unwrap();
        let b = equirect_to_perspective(&rotated, 15.0, 0.0, 90.0, 32, 32).unwrap();
        assert!(a.image.max_abs_diff(&b.image).unwrap() < 2.0 / 255.0);
    }

    #[test]
    fn downscale_commutes_approximately() {
        let pano = gradient_pano(256);
        let full = equirect_to_perspective(&pano, 10.0, 5.0, 90.0, 64, 64).unwrap();
        let small = equirect_to_perspective(&pano.downscale2().unwrap(), 10.0, 5.0, 90.0, 32, 32).unwrap();
        let mae = full.image.downscale2().unwrap().mean_abs_diff(&small.image).unwrap();
        assert!(mae < 4.0 / 255.0, "{mae}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let pano = gradient_pano(8);
        assert!(matches!(equirect_to_perspective(&pano, 0.0, 0.0, 180.0, 4, 4), Err(Error::BadFov(_))));
        assert!(matches!(equirect_to_perspective(&pano, 0.0, 0.0, 0.0, 4, 4), Err(Error::BadFov(_))));
        assert!(matches!(equirect_to_perspective(&pano, 0.0, 0.0, 90.0, 0, 4), Err(Error::EmptyOutput(_))));
        assert!(scene_context_from_panorama(&pano, 0.0, 0, 4, 4).is_err());
    }

    #[test]
    fn context_yaws() {
        let pano = gradient_pano(16);
        let set = scene_context_from_panorama(&pano, 0.0, 20, 8, 8).unwrap();
        let yaws: Vec<f64> = set.views.iter().map(|v| v.yaw).collect();
        let expect: Vec<f64> = (0..20).map(|i| 18.0 * i as f64).collect();
        assert_eq!(yaws, expect);
        assert!(set.views.iter().all(|v| v.pitch == 0.0 && v.fov == 90.0));

        let one = scene_context_from_panorama(&pano, 12.5, 1, 8, 8).unwrap();
        assert_eq!(one.views.len(), 1);
        assert_eq!(one.views[0].yaw, 12.5);

        let four = scene_context_from_panorama(&pano, 45.0, 4, 8, 8).unwrap();
        let yaws: Vec<f64> = four.views.iter().map(|v| v.yaw).collect();
        assert_eq!(yaws, vec![45.0, 135.0, 225.0, 315.0]);
    }

    #[test]
    fn twenty_views_cover_the_equatorial_band() {
        let pano = gradient_pano(32);
        let set = scene_context_from_panorama(&pano, 7.0, 20, 64, 64).unwrap();
        let acc = perspective_to_equirect_accumulate(&set, 32).unwrap();
        for y in 0..32 {
            for x in 0..64 {
                let (_, lat) = texel_lonlat(x, y, 64, 32);
                if lat.abs().to_degrees() < 30.0 {
                    assert!(acc.covered(x, y), "texel ({x}, {y}) uncovered");
                }
            }
        }
    }

    #[test]
    fn single_view_coverage_stays_in_frustum() {
        let pano = gradient_pano(32);
        let set = scene_context_from_panorama(&pano, 0.0, 1, 64, 64).unwrap();
        let acc = perspective_to_equirect_accumulate(&set, 32).unwrap();
        let mut any = false;
        for y in 0..32 {
            for x in 0..64 {
                if acc.covered(x, y) {
                    any = true;
                    let (lon, lat) = texel_lonlat(x, y, 64, 32);
                    // Texel centre within the 90x90 frustum, padded by one texel.
                    let d = lonlat_to_dir(lon, lat);
                    let pad = 6f64.to_radians();
                    assert!((d.x / -d.z).atan().abs() <= 45f64.to_radians() + pad && d.z < 0.0);
                    assert!((d.y / -d.z).atan().abs() <= 45f64.to_radians() + pad);
                }
            }
        }
        assert!(any);
    }

    #[test]
    fn round_trip_of_smooth_gradient() {
        let pano = gradient_pano(64);
        let set = scene_context_from_panorama(&pano, 0.0, 20, 96, 96).unwrap();
        let acc = perspective_to_equirect_accumulate(&set, 64).unwrap();
        let (mut sum, mut n) = (0.0, 0usize);
        for y in 0..64 {
            for x in 0..128 {
                if acc.covered(x, y) {
                    let a = pano.image().get(x, y);
                    let b = acc.panorama.image().get(x, y);
                    for c in 0..3 {
                        sum += (a[c] as f64 - b[c] as f64).abs();
                    }
                    n += 3;
                }
            }
        }
        let mae = sum / n as f64;
        assert!(mae < 2.0 / 255.0, "{mae}");
    }
}
