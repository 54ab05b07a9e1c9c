//! Pixel-fidelity metrics and the evaluation report.
//!
//! Both metrics expect pixel values on the unit range. PSNR is computed per
//! frame and averaged; SSIM works on BT.601 luma with a sliding window.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_trajectory, pose_error_scaled, PoseError, Trajectory, TranslationScale};
use crate::image::{RgbImage, Video};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Luma weights applied before SSIM.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Stand-in for an identical frame when averaging a video that also has
/// differing frames.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrAveraging {
    /// Mean of per-frame PSNR.
    #[default]
    PerFrame,
    /// PSNR of the MSE over the whole video.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimWindow {
    /// 8×8 box window, stride 1.
    #[default]
    Uniform8,
    /// 11×11 Gaussian window with σ = 1.5.
    Gaussian11,
}

impl SsimWindow {
    pub fn name(self) -> &'static str {
        match self {
            SsimWindow::Uniform8 => "uniform8",
            SsimWindow::Gaussian11 => "gaussian11",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform8" => Some(SsimWindow::Uniform8),
            "gaussian11" => Some(SsimWindow::Gaussian11),
            _ => None,
        }
    }
}

fn check_frames(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::shape(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn check_videos(a: &Video, b: &Video) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.dims() != b.dims() {
        return Err(Error::shape(format!("videos are {:?} and {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn mse(a: &RgbImage, b: &RgbImage) -> f64 {
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    sum / a.data().len() as f64
}

fn db(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// `10·log10(1/MSE)`; `+∞` for identical frames.
pub fn psnr_frame(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_frames(a, b)?;
    Ok(db(mse(a, b)))
}

pub fn psnr_per_frame(a: &Video, b: &Video) -> Result<Vec<f64>> {
    check_videos(a, b)?;
    Ok(a.frames().iter().zip(b.frames()).map(|(x, y)| db(mse(x, y))).collect())
}

/// Per-frame PSNR averaged over frames. Identical videos give `+∞`; an
/// identical frame inside an otherwise differing video counts as
/// [`PSNR_CAP_DB`].
pub fn psnr(a: &Video, b: &Video) -> Result<f64> {
    psnr_with(a, b, PsnrAveraging::PerFrame)
}

pub fn psnr_with(a: &Video, b: &Video, averaging: PsnrAveraging) -> Result<f64> {
    check_videos(a, b)?;
    match averaging {
        PsnrAveraging::PerFrame => {
            let per = psnr_per_frame(a, b)?;
            if per.iter().all(|p| p.is_infinite()) {
                return Ok(f64::INFINITY);
            }
            Ok(per.iter().map(|p| p.min(PSNR_CAP_DB)).sum::<f64>() / per.len() as f64)
        }
        PsnrAveraging::Global => {
            let total: f64 = a.frames().iter().zip(b.frames()).map(|(x, y)| mse(x, y)).sum();
            Ok(db(total / a.len() as f64))
        }
    }
}

/// Luma plane of a frame, `height × width`.
pub fn luma(img: &RgbImage) -> Array2<f64> {
    Array2::from_shape_fn((img.height(), img.width()), |(y, x)| {
        let p = img.get(x, y);
        LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64
    })
}

fn ssim_value(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// Summed-area table with a zero border row and column.
fn integral(a: &Array2<f64>) -> Array2<f64> {
    let (h, w) = a.dim();
    let mut s = Array2::zeros((h + 1, w + 1));
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += a[[y, x]];
            s[[y + 1, x + 1]] = s[[y, x + 1]] + row;
        }
    }
    s
}

fn box_sum(s: &Array2<f64>, y: usize, x: usize, k: usize) -> f64 {
    s[[y + k, x + k]] - s[[y, x + k]] - s[[y + k, x]] + s[[y, x]]
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Valid-region separable filtering with `taps` along both axes.
fn filter_valid(a: &Array2<f64>, taps: &[f64]) -> Array2<f64> {
    let (h, w) = a.dim();
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let horiz: Array2<f64> = Array2::from_shape_fn((h, ow), |(y, x)| (0..k).map(|i| taps[i] * a[[y, x + i]]).sum::<f64>());
    Array2::from_shape_fn((oh, ow), |(y, x)| (0..k).map(|i| taps[i] * horiz[[y + i, x]]).sum::<f64>())
}

/// Mean SSIM over every window position of one luma pair. The uniform window
/// shrinks to the frame when the frame is smaller than 8 pixels.
pub fn ssim_plane(a: &Array2<f64>, b: &Array2<f64>, window: SsimWindow) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("planes are {:?} and {:?}", a.dim(), b.dim())));
    }
    let (h, w) = a.dim();
    if h == 0 || w == 0 {
        return Err(Error::BadDims("empty frame".into()));
    }
    let ab = a * b;
    let aa = a * a;
    let bb = b * b;
    match window {
        SsimWindow::Uniform8 => {
            let k = 8.min(h).min(w);
            let n = (k * k) as f64;
            let [sa, sb, saa, sbb, sab] = [a, b, &aa, &bb, &ab].map(integral);
            let mut total = 0.0;
            for y in 0..=h - k {
                for x in 0..=w - k {
                    let mx = box_sum(&sa, y, x, k) / n;
                    let my = box_sum(&sb, y, x, k) / n;
                    let vx = box_sum(&saa, y, x, k) / n - mx * mx;
                    let vy = box_sum(&sbb, y, x, k) / n - my * my;
                    let cxy = box_sum(&sab, y, x, k) / n - mx * my;
                    total += ssim_value(mx, my, vx, vy, cxy);
                }
            }
            Ok(total / ((h - k + 1) * (w - k + 1)) as f64)
        }
        SsimWindow::Gaussian11 => {
            if h < 11 || w < 11 {
                return Err(Error::BadDims(format!("{w}x{h} is smaller than the 11x11 window")));
            }
            let taps = gaussian_taps(11, 1.5);
            let [mx, my, ex2, ey2, exy] = [a, b, &aa, &bb, &ab].map(|p| filter_valid(p, &taps));
            let mut total = 0.0;
            for ((((&mx, &my), &ex2), &ey2), &exy) in mx.iter().zip(&my).zip(&ex2).zip(&ey2).zip(&exy) {
                total += ssim_value(mx, my, ex2 - mx * mx, ey2 - my * my, exy - mx * my);
            }
            Ok(total / mx.len() as f64)
        }
    }
}

pub fn ssim_frame(a: &RgbImage, b: &RgbImage, window: SsimWindow) -> Result<f64> {
    check_frames(a, b)?;
    if a == b {
        return Ok(1.0);
    }
    ssim_plane(&luma(a), &luma(b), window)
}

pub fn ssim_per_frame(a: &Video, b: &Video, window: SsimWindow) -> Result<Vec<f64>> {
    check_videos(a, b)?;
    a.frames().iter().zip(b.frames()).map(|(x, y)| ssim_frame(x, y, window)).collect()
}

/// Mean SSIM over windows and frames with the 8×8 uniform window.
pub fn ssim(a: &Video, b: &Video) -> Result<f64> {
    ssim_with(a, b, SsimWindow::Uniform8)
}

pub fn ssim_with(a: &Video, b: &Video, window: SsimWindow) -> Result<f64> {
    let per = ssim_per_frame(a, b, window)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// JSON has no infinity, so unbounded PSNR values are written as `"inf"`.
mod db_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            Err(serde::ser::Error::custom(format!("PSNR value {v} cannot be stored")))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("unexpected PSNR value {t:?}"))),
        }
    }

    pub mod vec {
        use super::*;

        #[derive(Serialize, Deserialize)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|&x| Wrap(x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ssim_window: SsimWindow,
    pub translation_scale: TranslationScale,
}

/// Machine-readable evaluation of a generated video against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Mean of per-frame PSNR, dB.
    #[serde(with = "db_serde")]
    pub psnr: f64,
    /// PSNR of the whole-video MSE, dB.
    #[serde(with = "db_serde")]
    pub psnr_global: f64,
    pub ssim: f64,
    pub ssim_window: SsimWindow,
    #[serde(with = "db_serde::vec")]
    pub psnr_per_frame: Vec<f64>,
    pub ssim_per_frame: Vec<f64>,
    /// Present when both trajectories were given; computed on normalised
    /// trajectories.
    pub pose: Option<PoseError>,
    pub translation_scale: Option<TranslationScale>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: EvalReport = serde_json::from_str(text)?;
        if r.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported report version {}", r.format_version)));
        }
        Ok(r)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// PSNR, SSIM and (when both trajectories are given) pose error.
pub fn evaluate(
    generated: &Video,
    reference: &Video,
    trajectories: Option<(&Trajectory, &Trajectory)>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    check_videos(generated, reference)?;
    let pose = match trajectories {
        Some((g, r)) => {
            if g.frame_count() != generated.len() {
                return Err(Error::LengthMismatch {
                    left: g.frame_count(),
                    right: generated.len(),
                });
            }
            let (g, r) = (normalize_trajectory(g), normalize_trajectory(r));
            Some(pose_error_scaled(&g, &r, options.translation_scale)?)
        }
        None => None,
    };
    let (frames, height, width) = generated.dims();
    Ok(EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        frames,
        width,
        height,
        psnr: psnr_with(generated, reference, PsnrAveraging::PerFrame)?,
        psnr_global: psnr_with(generated, reference, PsnrAveraging::Global)?,
        ssim: ssim_with(generated, reference, options.ssim_window)?,
        ssim_window: options.ssim_window,
        psnr_per_frame: psnr_per_frame(generated, reference)?,
        ssim_per_frame: ssim_per_frame(generated, reference, options.ssim_window)?,
        translation_scale: pose.map(|_| options.translation_scale),
        pose,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(frames: Vec<RgbImage>) -> Video {
        Video::new(frames).unwrap()
    }

    #[test]
    fn uniform_error_gives_exact_db() {
        let a = video(vec![RgbImage::filled(8, 8, [0.5; 3])]);
        let b = video(vec![RgbImage::filled(8, 8, [0.6; 3])]);
        // 0.1 in f32 is not exact, so compare to the MSE actually present.
        let d = 0.6f32 as f64 - 0.5f32 as f64;
        assert!((psnr(&a, &b).unwrap() - 10.0 * (1.0 / (d * d)).log10()).abs() < 1e-12);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant_black_vs_white_matches_closed_form() {
        let a = video(vec![RgbImage::filled(16, 16, [0.0; 3])]);
        let b = video(vec![RgbImage::filled(16, 16, [1.0; 3])]);
        let expected = SSIM_C1 * SSIM_C2 / ((1.0 + SSIM_C1) * SSIM_C2);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((ssim_with(&a, &b, SsimWindow::Gaussian11).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn mixed_identical_frames_are_capped() {
        let a = video(vec![RgbImage::filled(4, 4, [0.5; 3]); 2]);
        let b = video(vec![RgbImage::filled(4, 4, [0.5; 3]), RgbImage::filled(4, 4, [0.6; 3])]);
        let p = psnr(&a, &b).unwrap();
        assert!(p.is_finite() && p < PSNR_CAP_DB);
    }

    #[test]
    fn gaussian_taps_are_normalised_and_symmetric() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..11 {
            assert_eq!(t[i], t[10 - i]);
        }
    }

    #[test]
    fn report_serialises_infinity() {
        let a = video(vec![RgbImage::filled(8, 8, [0.3; 3]); 2]);
        let r = evaluate(&a, &a, None, &EvalOptions::default()).unwrap();
        let text = r.to_json().unwrap();
        assert!(text.contains("\"inf\""));
        assert_eq!(EvalReport::from_json(&text).unwrap(), r);
    }
}
