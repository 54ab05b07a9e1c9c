use std::path::Path;

use ndarray::{Array2, Array3};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderBackend, ImplicitFeatures};
use crate::error::{Error, Result};
use crate::geometry::normalize_trajectory;
use crate::image::Video;
use crate::io::TensorBundle;
use crate::panorama::SceneContextSet;
use crate::scene::SamplePair;
use crate::tape::Tape;

use super::model::{forward, forward_on_tape, ForwardInputs};
use super::tokens::{context_permutation, patchify, unpatchify, Conditioning};
use super::{ModelConfig, Params};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup: usize,
    /// After warmup the rate follows a cosine from `lr` down to
    /// `lr * final_lr_ratio` at `steps`; 1 keeps it constant.
    pub final_lr_ratio: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub shuffle_context: bool,
    pub seed: u64,
    /// Smallest training timestep.
    pub t_min: f64,
    /// Location of the logit-normal timestep distribution; positive values
    /// spend more steps near pure noise.
    pub t_location: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 4,
            lr: 1e-3,
            warmup: 50,
            final_lr_ratio: 1.0,
            grad_clip: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            shuffle_context: true,
            seed: 0,
            t_min: 1e-3,
            t_location: 1.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("lr must be positive and betas in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.final_lr_ratio) {
            return Err(Error::Config("final_lr_ratio must lie in [0, 1]".into()));
        }
        if !self.t_location.is_finite() {
            return Err(Error::Config("t_location must be finite".into()));
        }
        if !(self.t_min > 0.0 && self.t_min < 1.0) {
            return Err(Error::Config("t_min must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        let step = step as usize;
        if step < self.warmup {
            return self.lr * (step + 1) as f64 / self.warmup as f64;
        }
        let span = self.steps.saturating_sub(self.warmup).max(1);
        let frac = ((step - self.warmup) as f64 / span as f64).min(1.0);
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
        self.lr * (self.final_lr_ratio + (1.0 - self.final_lr_ratio) * cosine)
    }
}

/// One training sample in model-ready form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// Clean video patches `x₀`, `f·g × patch_dim`.
    pub target: Array2<f64>,
    /// Conditioning in the original (unshuffled) view order.
    pub cond: Conditioning,
}

impl TrainingExample {
    /// Uses the with-subject video as the target and panorama views plus
    /// their encoded features as context.
    pub fn from_pair(config: &ModelConfig, pair: &SamplePair, encoder: &dyn EncoderBackend) -> Result<Self> {
        let (f, h, w) = pair.video_with_subject.dims();
        if (f, h, w) != (config.frames, config.height, config.width) {
            return Err(Error::BadDims(format!(
                "pair video is {f}x{h}x{w}, the model expects {}x{}x{}",
                config.frames, config.height, config.width
            )));
        }
        let (views, feats) = if config.context_views == 0 {
            let (gh, gw) = config.implicit_grid;
            let d = config.implicit_dim;
            (
                SceneContextSet {
                    views: Vec::new(),
                    start_yaw: pair.start_yaw(),
                },
                ImplicitFeatures::new(Array3::zeros((0, gh * gw, d)), Array3::zeros((0, 1, d)), gh, gw)?,
            )
        } else {
            let views = pair.context(config.context_views, config.width, config.height)?;
            let feats = encoder.encode(&views)?;
            (views, feats)
        };
        let traj = normalize_trajectory(&pair.trajectory);
        Ok(Self {
            target: patchify(pair.video_with_subject.frames(), config.patch)?,
            cond: Conditioning::new(config, &views, &feats, &traj, pair.prompt_tag as usize)?,
        })
    }
}

/// A fixed `(t, ε)` draw.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDraw {
    pub t: f64,
    pub noise: Array2<f64>,
}

fn noise(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Logit-normal timestep clamped to `[t_min, 1]`.
fn draw_t(rng: &mut impl Rng, tc: &TrainConfig) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (1.0 / (1.0 + (-(z + tc.t_location)).exp())).clamp(tc.t_min, 1.0)
}

/// Loss of one sample and, optionally, gradients for every parameter.
fn sample_loss(
    config: &ModelConfig,
    params: &Params,
    target: &Array2<f64>,
    cond: &Conditioning,
    t: f64,
    eps: &Array2<f64>,
    want_grads: bool,
) -> Result<(f64, Option<Params>)> {
    let xt = target * (1.0 - t) + eps * t;
    let v_target = eps - target;
    let mut tape = Tape::new();
    let vars = params.on_tape(&mut tape, want_grads);
    let fw = forward_on_tape(&mut tape, config, &vars, ForwardInputs { noisy: &xt, cond, t })?;
    let tv = tape.constant(v_target);
    let diff = tape.sub(fw.velocity, tv);
    let loss = tape.mean_square(diff);
    let value = tape.scalar(loss);
    if !want_grads {
        return Ok((value, None));
    }
    let g = tape.backward(loss);
    let grads = Params {
        tensors: vars
            .iter()
            .map(|(k, v)| (k.clone(), g.get(*v, tape.shape(*v))))
            .collect(),
    };
    Ok((value, Some(grads)))
}

/// Rectified-flow loss of one sample at a given `(t, ε)`, with the context in
/// its original order.
pub fn example_loss(config: &ModelConfig, params: &Params, ex: &TrainingExample, draw: &EvalDraw) -> Result<f64> {
    Ok(sample_loss(config, params, &ex.target, &ex.cond, draw.t, &draw.noise, false)?.0)
}

/// Loss and gradients of one sample (exposed for gradient checks).
pub fn example_loss_and_grads(
    config: &ModelConfig,
    params: &Params,
    ex: &TrainingExample,
    draw: &EvalDraw,
) -> Result<(f64, Params)> {
    let (l, g) = sample_loss(config, params, &ex.target, &ex.cond, draw.t, &draw.noise, true)?;
    Ok((l, g.expect("gradients requested")))
}

/// `per_example` fixed draws for each of `examples` samples.
pub fn eval_draws(config: &ModelConfig, examples: usize, per_example: usize, seed: u64, tc: &TrainConfig) -> Vec<Vec<EvalDraw>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..examples)
        .map(|_| {
            (0..per_example)
                .map(|_| EvalDraw {
                    t: draw_t(&mut rng, tc),
                    noise: noise(&mut rng, config.video_tokens(), config.patch_dim()),
                })
                .collect()
        })
        .collect()
}

/// Mean loss over fixed draws.
pub fn eval_loss(config: &ModelConfig, params: &Params, examples: &[TrainingExample], draws: &[Vec<EvalDraw>]) -> Result<f64> {
    let jobs: Vec<(&TrainingExample, &EvalDraw)> = examples
        .iter()
        .zip(draws)
        .flat_map(|(ex, ds)| ds.iter().map(move |d| (ex, d)))
        .collect();
    if jobs.is_empty() {
        return Err(Error::Config("no evaluation draws".into()));
    }
    let losses = jobs
        .par_iter()
        .map(|(ex, d)| example_loss(config, params, ex, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Parameters, optimiser moments, step counter and random state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub config: ModelConfig,
    pub train: TrainConfig,
    pub params: Params,
    pub adam_m: Params,
    pub adam_v: Params,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

/// Summary of one optimiser step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    format_version: u32,
    model: ModelConfig,
    train: TrainConfig,
    step: u64,
    rng_seed: Vec<u8>,
    rng_stream: u64,
    /// Decimal string: JSON numbers cannot hold a u128 exactly.
    rng_word_pos: String,
}

impl DiffusionState {
    pub fn new(config: ModelConfig, train: TrainConfig) -> Result<Self> {
        train.validate()?;
        let params = Params::init(&config)?;
        let zeros = params.zeros_like();
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(train.seed),
            config,
            train,
            adam_m: zeros.clone(),
            adam_v: zeros,
            params,
            step: 0,
        })
    }

    pub fn to_bundle(&self) -> TensorBundle {
        let meta = CheckpointMeta {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: self.config.clone(),
            train: self.train.clone(),
            step: self.step,
            rng_seed: self.rng.get_seed().to_vec(),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
        };
        let mut b = TensorBundle {
            metadata: serde_json::to_string(&meta).expect("plain struct serialises"),
            ..TensorBundle::default()
        };
        for (prefix, p) in [("param", &self.params), ("adam_m", &self.adam_m), ("adam_v", &self.adam_v)] {
            for (name, t) in &p.tensors {
                let (r, c) = t.dim();
                b.insert_f64(&format!("{prefix}/{name}"), vec![r, c], t.iter().copied().collect())
                    .expect("dims match data");
            }
        }
        b
    }

    pub fn from_bundle(b: &TensorBundle) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_str(&b.metadata)?;
        if meta.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", meta.format_version)));
        }
        let mut state = DiffusionState::new(meta.model, meta.train)?;
        for (prefix, p) in [
            ("param", &mut state.params),
            ("adam_m", &mut state.adam_m),
            ("adam_v", &mut state.adam_v),
        ] {
            for (name, t) in p.tensors.iter_mut() {
                let (dims, data) = b.get_f64(&format!("{prefix}/{name}"))?;
                if dims != [t.nrows(), t.ncols()] {
                    return Err(Error::Format(format!("{prefix}/{name} has dims {dims:?}, expected {:?}", t.dim())));
                }
                *t = Array2::from_shape_vec(t.dim(), data.to_vec()).expect("checked dims");
            }
        }
        let seed: [u8; 32] = meta
            .rng_seed
            .as_slice()
            .try_into()
            .map_err(|_| Error::Format("rng seed must be 32 bytes".into()))?;
        let word_pos: u128 = meta
            .rng_word_pos
            .parse()
            .map_err(|_| Error::Format("bad rng word position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(meta.rng_stream);
        rng.set_word_pos(word_pos);
        state.rng = rng;
        state.step = meta.step;
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bundle(&TensorBundle::read(path)?)
    }
}

/// One optimiser step on a batch drawn from `examples`: per sample, a
/// logit-normal `t`, Gaussian noise and (if enabled) a context shuffle that
/// keeps view 0 first. All randomness comes from `state.rng`, drawn before
/// the parallel part, so results do not depend on the thread count.
pub fn training_step(state: &mut DiffusionState, examples: &[TrainingExample]) -> Result<StepLog> {
    if examples.is_empty() {
        return Err(Error::Config("no training examples".into()));
    }
    let cfg = state.config.clone();
    let tc = state.train.clone();
    let batch: Vec<usize> = if tc.batch_size >= examples.len() {
        (0..examples.len()).collect()
    } else {
        sample_indices(&mut state.rng, examples.len(), tc.batch_size).into_vec()
    };
    let g = cfg.tokens_per_frame();
    let jobs: Vec<(usize, Vec<usize>, f64, Array2<f64>)> = batch
        .iter()
        .map(|&i| {
            let perm = if tc.shuffle_context {
                context_permutation(cfg.context_views, &mut state.rng)
            } else {
                (0..cfg.context_views).collect()
            };
            let t = draw_t(&mut state.rng, &tc);
            let eps = noise(&mut state.rng, cfg.video_tokens(), cfg.patch_dim());
            (i, perm, t, eps)
        })
        .collect();
    let results = jobs
        .par_iter()
        .map(|(i, perm, t, eps)| {
            let ex = &examples[*i];
            let cond = ex.cond.permuted(perm, g);
            sample_loss(&cfg, &state.params, &ex.target, &cond, *t, eps, true)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = results.len() as f64;
    let mut grads = state.params.zeros_like();
    let mut loss = 0.0;
    for (l, gr) in results {
        loss += l / n;
        let gr = gr.expect("gradients requested");
        for (name, acc) in grads.tensors.iter_mut() {
            acc.scaled_add(1.0 / n, &gr.tensors[name]);
        }
    }
    let grad_norm = grads.global_norm();
    if tc.grad_clip > 0.0 && grad_norm > tc.grad_clip {
        let k = tc.grad_clip / grad_norm;
        grads.tensors.values_mut().for_each(|t| *t *= k);
    }

    let lr = tc.lr_at(state.step);
    state.step += 1;
    let bc1 = 1.0 - tc.beta1.powi(state.step as i32);
    let bc2 = 1.0 - tc.beta2.powi(state.step as i32);
    for (name, p) in state.params.tensors.iter_mut() {
        let gr = &grads.tensors[name];
        let m = state.adam_m.tensors.get_mut(name).expect("same names");
        let v = state.adam_v.tensors.get_mut(name).expect("same names");
        ndarray::Zip::from(p).and(m).and(v).and(gr).for_each(|p, m, v, &g| {
            *m = tc.beta1 * *m + (1.0 - tc.beta1) * g;
            *v = tc.beta2 * *v + (1.0 - tc.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + tc.adam_eps);
        });
    }
    Ok(StepLog {
        step: state.step,
        loss,
        grad_norm,
        lr,
    })
}

/// Time grid value after applying a sigma shift `s`: `s·t / (1 + (s−1)·t)`.
pub fn shift_time(t: f64, shift: f64) -> f64 {
    shift * t / (1.0 + (shift - 1.0) * t)
}

/// Euler integration of the learned velocity from pure noise at `t = 1` to
/// `t = 0` over `steps` uniform (optionally shifted) substeps.
pub fn sample(
    config: &ModelConfig,
    params: &Params,
    cond: &Conditioning,
    steps: usize,
    seed: u64,
    shift: f64,
) -> Result<Video> {
    if steps == 0 {
        return Err(Error::Config("sampling needs at least one step".into()));
    }
    if !(shift > 0.0) {
        return Err(Error::Config(format!("sigma shift must be positive, got {shift}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = noise(&mut rng, config.video_tokens(), config.patch_dim());
    for i in 0..steps {
        let t = shift_time(1.0 - i as f64 / steps as f64, shift);
        let t_next = shift_time(1.0 - (i + 1) as f64 / steps as f64, shift);
        let v = forward(config, params, ForwardInputs { noisy: &x, cond, t })?;
        x.scaled_add(t_next - t, &v);
    }
    unpatchify(&x, config.frames, config.height, config.width, config.patch)
}
