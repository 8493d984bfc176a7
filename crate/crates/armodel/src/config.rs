use std::fmt;
use std::str::FromStr;

use maskgen_core::vocab::Vocabulary;
use serde::{Deserialize, Serialize};

use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Inner width of the SwiGLU feed-forward block.
    pub ffn_hidden: usize,
    pub rope_base: f64,
    pub norm_eps: f64,
    pub init_std: f64,
    pub seed: u64,
    pub vocab: Vocabulary,
    /// Length of one flattened image patch fed to the adaptor.
    pub patch_dim: usize,
}

/// LLaMA's feed-forward sizing: 2/3 of 4·hidden, rounded up to a multiple of 8.
pub fn llama_ffn_width(hidden: usize) -> usize {
    (8 * hidden).div_ceil(3).div_ceil(8) * 8
}

impl ModelConfig {
    /// Desk-scale default: 4 layers, hidden 128, 4 heads.
    pub fn toy(vocab: Vocabulary, patch_dim: usize) -> Self {
        Self {
            layers: 4,
            hidden: 128,
            heads: 4,
            ffn_hidden: llama_ffn_width(128),
            rope_base: 10_000.0,
            norm_eps: 1e-5,
            init_std: 0.02,
            seed: 0,
            vocab,
            patch_dim,
        }
    }

    pub fn base(vocab: Vocabulary, patch_dim: usize) -> Self {
        Self {
            layers: 16,
            hidden: 1920,
            heads: 20,
            ffn_hidden: llama_ffn_width(1920),
            ..Self::toy(vocab, patch_dim)
        }
    }

    pub fn large(vocab: Vocabulary, patch_dim: usize) -> Self {
        Self {
            layers: 22,
            hidden: 2304,
            heads: 32,
            ffn_hidden: llama_ffn_width(2304),
            ..Self::toy(vocab, patch_dim)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.layers == 0 || self.heads == 0 || self.hidden == 0 || self.ffn_hidden == 0 || self.patch_dim == 0 {
            return bad("layers, heads, hidden, ffn_hidden and patch_dim must be positive".into());
        }
        if self.hidden % self.heads != 0 {
            return bad(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if self.head_dim() % 2 != 0 {
            return bad(format!("head dim {} must be even for rotary embeddings", self.head_dim()));
        }
        if self.vocab.mask_tokens == 0 {
            return bad("vocabulary has no mask tokens".into());
        }
        if !(self.rope_base > 1.0) || !(self.norm_eps > 0.0) || !(self.init_std > 0.0) {
            return bad("rope_base must exceed 1, norm_eps and init_std must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Pretrain,
    Finetune,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pretrain" => Ok(Preset::Pretrain),
            "finetune" => Ok(Preset::Finetune),
            _ => Err(format!("unknown preset {s:?} (expected pretrain or finetune)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Pretrain => "pretrain",
            Preset::Finetune => "finetune",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub adam_eps: f64,
    /// Fraction of total steps spent in linear warmup.
    pub warmup_frac: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Pretrain => Self {
                lr: 2e-4,
                beta1: 0.9,
                beta2: 0.95,
                weight_decay: 0.05,
                adam_eps: 1e-8,
                warmup_frac: 0.01,
                epochs: 30,
                batch_size: 4,
                grad_clip: Some(1.0),
                seed: 0,
            },
            Preset::Finetune => Self {
                lr: 1e-4,
                beta2: 0.99,
                weight_decay: 0.0,
                // one sample per step: at this lr the toy model is step-starved
                batch_size: 1,
                ..Self::preset(Preset::Pretrain)
            },
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) || !(self.adam_eps > 0.0) {
            return bad("weight_decay must be non-negative and adam_eps positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return bad("warmup_frac must lie in [0, 1]");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let p = TrainConfig::preset(Preset::Pretrain);
        assert_eq!((p.lr, p.beta1, p.beta2, p.weight_decay), (2e-4, 0.9, 0.95, 0.05));
        let f = TrainConfig::preset(Preset::Finetune);
        assert_eq!((f.lr, f.beta1, f.beta2, f.weight_decay), (1e-4, 0.9, 0.99, 0.0));
        assert_eq!((f.warmup_frac, f.batch_size, p.batch_size), (0.01, 1, 4));
        assert_eq!("finetune".parse::<Preset>().unwrap(), Preset::Finetune);
        assert!("adam".parse::<Preset>().is_err());
    }

    #[test]
    fn model_shapes() {
        let v = Vocabulary::new(1024, 39);
        let toy = ModelConfig::toy(v, 768);
        assert_eq!((toy.layers, toy.hidden, toy.heads, toy.head_dim()), (4, 128, 4, 32));
        assert_eq!(toy.ffn_hidden, 344);
        toy.validate().unwrap();
        ModelConfig::base(v, 768).validate().unwrap();
        ModelConfig::large(v, 768).validate().unwrap();
        let bad = ModelConfig {
            heads: 3,
            ..toy.clone()
        };
        assert!(bad.validate().is_err());
        let odd = ModelConfig {
            hidden: 12,
            heads: 4,
            ..toy
        };
        assert!(odd.validate().is_err());
    }
}
