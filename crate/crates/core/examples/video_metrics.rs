//! PSNR and SSIM of a rendered video against noisy and shifted copies.

use cinectx::image::{RgbImage, Video};
use cinectx::metrics::{psnr, psnr_with, ssim, ssim_with, PsnrAveraging, SsimWindow};
use cinectx::scene::{make_sample_pair, PairConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn noisy(v: &Video, sigma: f64) -> Video {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = Normal::new(0.0, sigma).unwrap();
    let frames = v
        .frames()
        .iter()
        .map(|f| {
            let data = f.data().iter().map(|&x| (x as f64 + n.sample(&mut rng)).clamp(0.0, 1.0) as f32).collect();
            RgbImage::from_raw(f.width(), f.height(), data).unwrap()
        })
        .collect();
    Video::new(frames).unwrap()
}

fn main() -> cinectx::Result<()> {
    let pair = make_sample_pair(1, 2, &PairConfig { frames: 5, width: 64, height: 64, pano_h: 64, ..PairConfig::default() })?;
    let video = &pair.video_with_subject;
    println!("self: PSNR {} dB, SSIM {}", psnr(video, video)?, ssim(video, video)?);
    for sigma in [0.01, 0.05, 0.1] {
        let n = noisy(video, sigma);
        println!(
            "noise {sigma:.2}: PSNR {:.2} dB (global {:.2}), SSIM {:.4} (gaussian {:.4})",
            psnr(&n, video)?,
            psnr_with(&n, video, PsnrAveraging::Global)?,
            ssim(&n, video)?,
            ssim_with(&n, video, SsimWindow::Gaussian11)?
        );
    }
    println!(
        "without subject: PSNR {:.2} dB, SSIM {:.4}",
        psnr(&pair.video_without_subject, video)?,
        ssim(&pair.video_without_subject, video)?
    );
    Ok(())
}
