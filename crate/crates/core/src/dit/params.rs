use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::ImplicitProjection;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

use super::ModelConfig;

/// Number of sin/cos frequency pairs in the timestep features.
pub(crate) const TIME_FREQS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Attention,
    FeedForward,
    Norms,
    Embeddings,
    CameraEncoder,
    PromptTable,
    ImplicitProjection,
    OutputHead,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 8] = [
        ParamGroup::Attention,
        ParamGroup::FeedForward,
        ParamGroup::Norms,
        ParamGroup::Embeddings,
        ParamGroup::CameraEncoder,
        ParamGroup::PromptTable,
        ParamGroup::ImplicitProjection,
        ParamGroup::OutputHead,
    ];

    pub fn of(name: &str) -> ParamGroup {
        let tail = name.rsplit('.').nth(1).unwrap_or(name);
        if name.starts_with("camera.") {
            ParamGroup::CameraEncoder
        } else if name.starts_with("prompt.") {
            ParamGroup::PromptTable
        } else if name.starts_with("implicit.") {
            ParamGroup::ImplicitProjection
        } else if name.starts_with("head.") {
            ParamGroup::OutputHead
        } else if name.starts_with("embed.") {
            ParamGroup::Embeddings
        } else if tail.ends_with("_ln") || name.starts_with("final_ln.") {
            ParamGroup::Norms
        } else if tail == "ffn" {
            ParamGroup::FeedForward
        } else {
            ParamGroup::Attention
        }
    }
}

/// Named parameter tensors, kept sorted so iteration order is fixed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    pub tensors: BTreeMap<String, Array2<f64>>,
}

impl Params {
    /// Seeded initialisation: normal weights scaled by `1/sqrt(fan_in)`,
    /// zero biases, identity norms.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.hidden;
        let mut p = Params::default();
        let mut normal = |p: &mut Params, name: &str, rows: usize, cols: usize, std: f64| {
            let dist = Normal::new(0.0, std).expect("positive std");
            p.tensors.insert(name.to_string(), Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng)));
        };
        let scaled = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let pd = config.patch_dim();
        normal(&mut p, "embed.patch.w", pd, d, scaled(pd));
        p.zeros("embed.patch.b", 1, d);
        normal(&mut p, "embed.segment", 3, d, 0.02);
        normal(&mut p, "embed.time.w", 2 * TIME_FREQS, d, scaled(2 * TIME_FREQS));
        p.zeros("embed.time.b", 1, d);
        normal(&mut p, "camera.w", 12, d, scaled(12));
        p.zeros("camera.b", 1, d);
        normal(&mut p, "prompt.table", config.prompt_vocab, d, 1.0);
        normal(&mut p, "prompt.null", 1, d, 1.0);
        let fan = 4 * config.implicit_dim;
        normal(&mut p, "implicit.w", fan, d, scaled(fan));
        p.zeros("implicit.b", 1, d);
        p.ones("implicit.ln_g", 1, d);
        p.zeros("implicit.ln_b", 1, d);
        let ff = config.ffn_mult * d;
        for l in 0..config.layers {
            for block in ["attn", "cross"] {
                for m in ["q", "k", "v"] {
                    normal(&mut p, &format!("layer{l}.{block}.{m}"), d, d, scaled(d));
                }
                normal(&mut p, &format!("layer{l}.{block}.o"), d, d, scaled(d) / (2.0 * config.layers as f64).sqrt());
            }
            normal(&mut p, &format!("layer{l}.ffn.w1"), d, ff, scaled(d));
            p.zeros(&format!("layer{l}.ffn.b1"), 1, ff);
            normal(&mut p, &format!("layer{l}.ffn.w2"), ff, d, scaled(ff) / (2.0 * config.layers as f64).sqrt());
            p.zeros(&format!("layer{l}.ffn.b2"), 1, d);
            for ln in ["attn_ln", "cross_ln", "ffn_ln"] {
                p.ones(&format!("layer{l}.{ln}.g"), 1, d);
                p.zeros(&format!("layer{l}.{ln}.b"), 1, d);
            }
        }
        p.ones("final_ln.g", 1, d);
        p.zeros("final_ln.b", 1, d);
        normal(&mut p, "head.w", d, pd, 0.02);
        p.zeros("head.b", 1, pd);
        Ok(p)
    }

    fn zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.tensors.insert(name.to_string(), Array2::zeros((rows, cols)));
    }

    fn ones(&mut self, name: &str, rows: usize, cols: usize) {
        self.tensors.insert(name.to_string(), Array2::ones((rows, cols)));
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Params {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Array2::zeros(v.dim())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Array2<f64>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Array2<f64>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn names_in(&self, group: ParamGroup) -> Vec<&str> {
        self.tensors
            .keys()
            .filter(|k| ParamGroup::of(k) == group)
            .map(String::as_str)
            .collect()
    }

    /// Puts every tensor on the tape, trainable or constant.
    pub fn on_tape(&self, tape: &mut Tape, trainable: bool) -> BTreeMap<String, Var> {
        self.tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable { tape.param(v.clone()) } else { tape.constant(v.clone()) };
                (k.clone(), var)
            })
            .collect()
    }

    pub fn implicit_projection(&self) -> Result<ImplicitProjection> {
        Ok(ImplicitProjection {
            weight: self.get("implicit.w")?.clone(),
            bias: self.get("implicit.b")?.clone(),
            ln_gamma: self.get("implicit.ln_g")?.clone(),
            ln_beta: self.get("implicit.ln_b")?.clone(),
        })
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.values().flat_map(|t| t.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_group_is_populated() {
        let p = Params::init(&ModelConfig::default()).unwrap();
        for g in ParamGroup::ALL {
            assert!(!p.names_in(g).is_empty(), "{g:?}");
        }
        assert_eq!(ParamGroup::of("layer0.attn_ln.g"), ParamGroup::Norms);
        assert_eq!(ParamGroup::of("layer1.ffn.w2"), ParamGroup::FeedForward);
        assert_eq!(ParamGroup::of("layer1.cross.q"), ParamGroup::Attention);
        assert_eq!(ParamGroup::of("final_ln.b"), ParamGroup::Norms);
    }

    #[test]
    fn init_is_seeded() {
        let c = ModelConfig::default();
        assert_eq!(Params::init(&c).unwrap(), Params::init(&c).unwrap());
        let other = ModelConfig { seed: 1, ..c.clone() };
        assert_ne!(Params::init(&c).unwrap(), Params::init(&other).unwrap());
        assert!(Params::init(&c).unwrap().count() > 100_000);
    }
}
