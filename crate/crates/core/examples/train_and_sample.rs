//! Trains a small diffusion transformer on two pairs, samples from it and
//! scores the samples.
//!
//! cargo run -p cinectx --example train_and_sample [steps]

use cinectx::dit::{eval_draws, eval_loss, sample, training_step, DiffusionState, ModelConfig, TrainConfig, TrainingExample};
use cinectx::encoder::ToyEncoder;
use cinectx::metrics::{psnr, ssim};
use cinectx::scene::{make_sample_pair, PairConfig};

fn main() -> cinectx::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let config = ModelConfig {
        context_views: 8,
        ..ModelConfig::default()
    };
    let pair_config = PairConfig {
        frames: config.frames,
        width: config.width,
        height: config.height,
        pano_h: 128,
        ..PairConfig::default()
    };
    let encoder = ToyEncoder::new(config.implicit_dim, config.implicit_grid, 0);
    let pairs = (0..2)
        .map(|i| make_sample_pair(100 + i, 200 + i, &pair_config))
        .collect::<cinectx::Result<Vec<_>>>()?;
    let examples = pairs
        .iter()
        .map(|p| TrainingExample::from_pair(&config, p, &encoder))
        .collect::<cinectx::Result<Vec<_>>>()?;

    let train = TrainConfig {
        steps,
        batch_size: 2,
        lr: 2e-3,
        ..TrainConfig::default()
    };
    let draws = eval_draws(&config, examples.len(), 8, 99, &train);
    let mut state = DiffusionState::new(config.clone(), train)?;
    println!("held-out loss before: {:.4}", eval_loss(&config, &state.params, &examples, &draws)?);
    for i in 0..steps {
        let log = training_step(&mut state, &examples)?;
        if (i + 1) % 50 == 0 {
            println!("step {:4}: loss {:.4}, grad norm {:.3}, lr {:.1e}", log.step, log.loss, log.grad_norm, log.lr);
        }
    }
    println!("held-out loss after: {:.4}", eval_loss(&config, &state.params, &examples, &draws)?);

    for (ex, pair) in examples.iter().zip(&pairs) {
        let video = sample(&config, &state.params, &ex.cond, 50, 7, 1.0)?;
        println!(
            "sample vs ground truth: PSNR {:.2} dB, SSIM {:.4}",
            psnr(&video, &pair.video_with_subject)?,
            ssim(&video, &pair.video_with_subject)?
        );
    }
    Ok(())
}
