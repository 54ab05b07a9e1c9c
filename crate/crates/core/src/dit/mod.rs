//! A small diffusion transformer conditioned on scene context.
//!
//! Noisy video tokens, context-image tokens and implicit-feature tokens are
//! concatenated along the frame axis and processed by full self-attention
//! with 3-axis rotary positions. Camera embeddings are added to video tokens
//! only; the prompt tag enters through cross-attention. Training uses
//! rectified flow.

mod model;
mod params;
mod tokens;
mod train;

use serde::{Deserialize, Serialize};

use crate::encoder::{DEFAULT_FEATURE_DIM, DEFAULT_FEATURE_GRID};
use crate::error::{Error, Result};
use crate::panorama::DEFAULT_CONTEXT_VIEWS;
use crate::scene::PROMPT_VOCAB;

pub use model::{forward, forward_on_tape, Forward, ForwardInputs};
pub use params::{ParamGroup, Params};
pub use tokens::{
    assemble_sequence, encode_camera, encode_camera_inputs, patchify, sequence_layout, shuffle_context, tokenize_context_images,
    tokenize_video, unpatchify,
    Conditioning, Segment, TokenSequence,
};
pub use train::{
    eval_draws, eval_loss, example_loss, example_loss_and_grads, sample, shift_time, training_step, DiffusionState,
    EvalDraw, StepLog, TrainConfig, TrainingExample, CHECKPOINT_FORMAT_VERSION,
};

/// Model dimensions and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub context_views: usize,
    /// Dimension `D` of the implicit features.
    pub implicit_dim: usize,
    /// Spatial grid of the implicit features per view.
    pub implicit_grid: (usize, usize),
    /// Spatial patch size in pixels.
    pub patch: usize,
    pub prompt_vocab: usize,
    pub ffn_mult: usize,
    pub rope_base: f64,
    /// Give implicit tokens the frame ids of their matching context images
    /// instead of ids after them.
    pub shared_implicit_frame_ids: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 2,
            heads: 4,
            frames: 9,
            height: 32,
            width: 32,
            context_views: DEFAULT_CONTEXT_VIEWS,
            implicit_dim: DEFAULT_FEATURE_DIM,
            implicit_grid: DEFAULT_FEATURE_GRID,
            patch: 16,
            prompt_vocab: PROMPT_VOCAB,
            ffn_mult: 4,
            rope_base: 100.0,
            shared_implicit_frame_ids: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("heads", self.heads),
            ("frames", self.frames),
            ("height", self.height),
            ("width", self.width),
            ("implicit_dim", self.implicit_dim),
            ("prompt_vocab", self.prompt_vocab),
            ("ffn_mult", self.ffn_mult),
            ("implicit_grid.0", self.implicit_grid.0),
            ("implicit_grid.1", self.implicit_grid.1),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.hidden % self.heads != 0 || (self.hidden / self.heads) % 2 != 0 {
            return Err(Error::Config(format!(
                "hidden {} must split into {} heads of even width",
                self.hidden, self.heads
            )));
        }
        if self.patch < 2 || self.patch % 2 != 0 {
            return Err(Error::Config(format!("patch {} must be even and at least 2", self.patch)));
        }
        if self.height % self.patch != 0 || self.width % self.patch != 0 {
            return Err(Error::BadDims(format!(
                "{}x{} is not divisible by the patch size {}",
                self.height, self.width, self.patch
            )));
        }
        if !(self.rope_base > 1.0) {
            return Err(Error::Config("rope_base must exceed 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Token grid `(h/patch, w/patch)` of one frame.
    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch, self.width / self.patch)
    }

    pub fn tokens_per_frame(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    pub fn video_tokens(&self) -> usize {
        self.frames * self.tokens_per_frame()
    }

    /// `f·g + 2·V·g`.
    pub fn sequence_len(&self) -> usize {
        (self.frames + 2 * self.context_views) * self.tokens_per_frame()
    }

    /// Pixel values per patch.
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * 3
    }

    /// Grid the implicit features are resized to before the 2×2 patch map.
    pub fn implicit_target(&self) -> (usize, usize) {
        let (gh, gw) = self.grid();
        (2 * gh, 2 * gw)
    }
}
