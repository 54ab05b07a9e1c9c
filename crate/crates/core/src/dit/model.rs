use std::collections::BTreeMap;

use ndarray::Array2;

use crate::encoder::project_on_tape;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

use super::params::TIME_FREQS;
use super::tokens::{assemble_on_tape, sequence_layout, Conditioning};
use super::{ModelConfig, Params};

const LN_EPS: f64 = 1e-5;

/// One denoising evaluation: noisy video patches at time `t` plus the
/// conditioning.
#[derive(Debug, Clone, Copy)]
pub struct ForwardInputs<'a> {
    /// `f·g × patch_dim`.
    pub noisy: &'a Array2<f64>,
    pub cond: &'a Conditioning,
    pub t: f64,
}

/// Handles to the interesting nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Predicted clean patches.
    pub x0: Var,
    /// Predicted velocity `(x_t − x̂0) / t`.
    pub velocity: Var,
    /// Assembled input sequence.
    pub tokens: Var,
    /// Camera rows of the sequence (zeros on context).
    pub camera: Var,
}

pub(crate) fn time_features(t: f64) -> Array2<f64> {
    let mut out = Array2::zeros((1, 2 * TIME_FREQS));
    for k in 0..TIME_FREQS {
        let w = std::f64::consts::PI * (1u64 << k) as f64;
        out[[0, 2 * k]] = (w * t).sin();
        out[[0, 2 * k + 1]] = (w * t).cos();
    }
    out
}

/// Cosine and sine tables (`N × head_dim/2`) for 3-axis rotary positions.
/// Pairs are split between frame, row and column as `n − 2⌊n/3⌋`, `⌊n/3⌋`,
/// `⌊n/3⌋`.
pub(crate) fn rope_tables(config: &ModelConfig, positions: &[[usize; 3]]) -> (Array2<f64>, Array2<f64>) {
    let n = config.head_dim() / 2;
    let per_axis = [n - 2 * (n / 3), n / 3, n / 3];
    let mut freqs = Vec::with_capacity(n);
    for (axis, &count) in per_axis.iter().enumerate() {
        for j in 0..count {
            freqs.push((axis, config.rope_base.powf(-(j as f64) / count as f64)));
        }
    }
    let mut cos = Array2::zeros((positions.len(), n));
    let mut sin = Array2::zeros((positions.len(), n));
    for (r, p) in positions.iter().enumerate() {
        for (i, &(axis, f)) in freqs.iter().enumerate() {
            let a = p[axis] as f64 * f;
            cos[[r, i]] = a.cos();
            sin[[r, i]] = a.sin();
        }
    }
    (cos, sin)
}

fn attention(
    tape: &mut Tape,
    config: &ModelConfig,
    q: Var,
    k: Var,
    v: Var,
    rope: Option<&(Array2<f64>, Array2<f64>)>,
) -> Var {
    let hd = config.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let heads: Vec<Var> = (0..config.heads)
        .map(|h| {
            let (a, b) = (h * hd, (h + 1) * hd);
            let mut qh = tape.slice_cols(q, a, b);
            let mut kh = tape.slice_cols(k, a, b);
            if let Some((cos, sin)) = rope {
                qh = tape.rope(qh, cos.clone(), sin.clone());
                kh = tape.rope(kh, cos.clone(), sin.clone());
            }
            let vh = tape.slice_cols(v, a, b);
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt);
            let scores = tape.scale(scores, scale);
            let probs = tape.softmax_rows(scores);
            tape.matmul(probs, vh)
        })
        .collect();
    if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)
    }
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
    let y = tape.matmul(x, w);
    tape.add_row(y, b)
}

/// Builds the full forward pass on `tape` from parameter handles `vars`.
pub fn forward_on_tape(
    tape: &mut Tape,
    config: &ModelConfig,
    vars: &BTreeMap<String, Var>,
    inputs: ForwardInputs<'_>,
) -> Result<Forward> {
    let cond = inputs.cond;
    let pd = config.patch_dim();
    let ctx = config.context_views * config.tokens_per_frame();
    if inputs.noisy.dim() != (config.video_tokens(), pd) {
        return Err(Error::shape(format!(
            "noisy patches {:?}, expected {:?}",
            inputs.noisy.dim(),
            (config.video_tokens(), pd)
        )));
    }
    if cond.context_patches.dim() != (ctx, pd) || cond.implicit_rows.dim() != (ctx, 4 * config.implicit_dim) {
        return Err(Error::shape("conditioning does not match the model configuration".to_string()));
    }
    if cond.camera.dim() != (config.frames, 12) {
        return Err(Error::LengthMismatch {
            left: cond.camera.nrows(),
            right: config.frames,
        });
    }
    if cond.prompt_tag >= config.prompt_vocab {
        return Err(Error::Config(format!("prompt tag {} out of range", cond.prompt_tag)));
    }
    if !(inputs.t > 0.0 && inputs.t <= 1.0) {
        return Err(Error::Config(format!("timestep {} outside (0, 1]", inputs.t)));
    }
    let p = |name: &str| vars[name];

    // Token embeddings: the patch map is shared by video and context images.
    let xt = tape.constant(inputs.noisy.clone());
    let video = linear(tape, xt, p("embed.patch.w"), p("embed.patch.b"));
    let ctx_px = tape.constant(cond.context_patches.clone());
    let image_ctx = linear(tape, ctx_px, p("embed.patch.w"), p("embed.patch.b"));
    let imp = tape.constant(cond.implicit_rows.clone());
    let implicit_ctx = project_on_tape(
        tape,
        imp,
        [p("implicit.w"), p("implicit.b"), p("implicit.ln_g"), p("implicit.ln_b")],
    );
    let cam_in = tape.constant(cond.camera.clone());
    let cam = linear(tape, cam_in, p("camera.w"), p("camera.b"));
    let (tokens, camera) = assemble_on_tape(tape, config, vars, video, image_ctx, implicit_ctx, cam);

    let tf = tape.constant(time_features(inputs.t));
    let temb = linear(tape, tf, p("embed.time.w"), p("embed.time.b"));
    let mut h = tape.add_row(tokens, temb);

    let (positions, _) = sequence_layout(config);
    let rope = rope_tables(config, &positions);
    let prompt_row = tape.gather_rows(p("prompt.table"), &[cond.prompt_tag]);
    let prompt_keys = tape.concat_rows(&[prompt_row, p("prompt.null")]);

    for l in 0..config.layers {
        let n = |s: &str| vars[&format!("layer{l}.{s}")];

        let a = tape.layer_norm(h, n("attn_ln.g"), n("attn_ln.b"), LN_EPS);
        let q = tape.matmul(a, n("attn.q"));
        let k = tape.matmul(a, n("attn.k"));
        let v = tape.matmul(a, n("attn.v"));
        let o = attention(tape, config, q, k, v, Some(&rope));
        let o = tape.matmul(o, n("attn.o"));
        h = tape.add(h, o);

        let b = tape.layer_norm(h, n("cross_ln.g"), n("cross_ln.b"), LN_EPS);
        let q = tape.matmul(b, n("cross.q"));
        let k = tape.matmul(prompt_keys, n("cross.k"));
        let v = tape.matmul(prompt_keys, n("cross.v"));
        let o = attention(tape, config, q, k, v, None);
        let o = tape.matmul(o, n("cross.o"));
        h = tape.add(h, o);

        let c = tape.layer_norm(h, n("ffn_ln.g"), n("ffn_ln.b"), LN_EPS);
        let u = linear(tape, c, n("ffn.w1"), n("ffn.b1"));
        let u = tape.gelu(u);
        let u = linear(tape, u, n("ffn.w2"), n("ffn.b2"));
        h = tape.add(h, u);
    }

    let out = tape.layer_norm(h, p("final_ln.g"), p("final_ln.b"), LN_EPS);
    let video_out = tape.slice_rows(out, 0, config.video_tokens());
    let x0 = linear(tape, video_out, p("head.w"), p("head.b"));
    let diff = tape.sub(xt, x0);
    let velocity = tape.scale(diff, 1.0 / inputs.t);
    Ok(Forward {
        x0,
        velocity,
        tokens,
        camera,
    })
}

/// Predicted velocity over video patches, `f·g × patch_dim`.
pub fn forward(config: &ModelConfig, params: &Params, inputs: ForwardInputs<'_>) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let vars = params.on_tape(&mut tape, false);
    let f = forward_on_tape(&mut tape, config, &vars, inputs)?;
    Ok(tape.value(f.velocity).clone())
}
