//! Run configuration, read from TOML.
//!
//! Every table is optional; missing fields take the desk-scale defaults. The
//! model's vocabulary and patch width are not configurable here because they
//! follow from the codebook size and the patch geometry.

use std::path::Path;

use maskgen_armodel::{ModelConfig, Preset, Strategy, TrainConfig};
use maskgen_core::dataset::{Task, WORDS};
use maskgen_core::metrics::{Connectivity, EvalOptions, DEFAULT_THRESHOLDS};
use maskgen_core::vocab::Vocabulary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::seeds::split_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root seed; every stochastic stage derives its own seed from it.
    pub seed: u64,
    pub data: DataConfig,
    pub codebook: CodebookConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub decode: DecodeConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub task: Task,
    /// Training scenes use seeds `seed0 .. seed0 + train`.
    pub train: usize,
    /// Held-out scenes start after both the training and the codebook seeds.
    pub eval: usize,
    pub seed0: u64,
    /// Square canvas side in pixels.
    pub canvas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub k: usize,
    /// Masks in the codebook corpus, seeds `seed0 .. seed0 + samples`.
    pub samples: usize,
    pub max_iters: usize,
    pub patch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Defaults to the LLaMA sizing rule for `hidden`.
    pub ffn_hidden: Option<usize>,
    pub rope_base: f64,
    pub norm_eps: f64,
    pub init_std: f64,
}

/// A preset plus optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub preset: Preset,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub weight_decay: Option<f64>,
    pub adam_eps: Option<f64>,
    pub warmup_frac: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    /// Zero or negative disables clipping.
    pub grad_clip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub connectivity: Connectivity,
    pub strict_above: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            codebook: CodebookConfig::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            decode: DecodeConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            task: Task::Referring,
            train: 500,
            eval: 100,
            seed0: 0,
            canvas: 64,
        }
    }
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            k: 1024,
            samples: 2000,
            max_iters: 100,
            patch: 16,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let toy = ModelConfig::toy(Vocabulary::new(2, 1), 1);
        Self {
            layers: toy.layers,
            hidden: toy.hidden,
            heads: toy.heads,
            ffn_hidden: None,
            rope_base: toy.rope_base,
            norm_eps: toy.norm_eps,
            init_std: toy.init_std,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            preset: Preset::Finetune,
            lr: None,
            beta1: None,
            beta2: None,
            weight_decay: None,
            adam_eps: None,
            warmup_frac: None,
            epochs: None,
            batch_size: None,
            grad_clip: None,
        }
    }
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            connectivity: Connectivity::Four,
            strict_above: false,
        }
    }
}

impl Config {
    /// Small enough to run end to end in well under a minute on one core.
    pub fn smoke() -> Self {
        Self {
            data: DataConfig {
                train: 50,
                eval: 20,
                ..DataConfig::default()
            },
            codebook: CodebookConfig {
                k: 128,
                samples: 200,
                ..CodebookConfig::default()
            },
            model: ModelSection {
                layers: 2,
                hidden: 64,
                heads: 4,
                ..ModelSection::default()
            },
            train: TrainSection {
                epochs: Some(2),
                ..TrainSection::default()
            },
            ..Config::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn grid(&self) -> (usize, usize) {
        let side = self.data.canvas / self.codebook.patch;
        (side, side)
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.codebook.k, WORDS.len())
    }

    /// Image patches carry three channels.
    pub fn patch_dim(&self) -> usize {
        self.codebook.patch * self.codebook.patch * 3
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            layers: m.layers,
            hidden: m.hidden,
            heads: m.heads,
            ffn_hidden: m.ffn_hidden.unwrap_or_else(|| maskgen_armodel::config::llama_ffn_width(m.hidden)),
            rope_base: m.rope_base,
            norm_eps: m.norm_eps,
            init_std: m.init_std,
            seed: split_seed(self.seed, "model-init"),
            vocab: self.vocabulary(),
            patch_dim: self.patch_dim(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let base = TrainConfig::preset(t.preset);
        TrainConfig {
            lr: t.lr.unwrap_or(base.lr),
            beta1: t.beta1.unwrap_or(base.beta1),
            beta2: t.beta2.unwrap_or(base.beta2),
            weight_decay: t.weight_decay.unwrap_or(base.weight_decay),
            adam_eps: t.adam_eps.unwrap_or(base.adam_eps),
            warmup_frac: t.warmup_frac.unwrap_or(base.warmup_frac),
            epochs: t.epochs.unwrap_or(base.epochs),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            grad_clip: match t.grad_clip {
                None => base.grad_clip,
                Some(c) if c > 0.0 => Some(c),
                Some(_) => None,
            },
            seed: split_seed(self.seed, "train-order"),
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            connectivity: self.eval.connectivity,
            strict_above: self.eval.strict_above,
        }
    }

    /// First seed of the held-out split.
    pub fn eval_seed0(&self) -> u64 {
        self.data.seed0 + self.data.train.max(self.codebook.samples) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let (d, c) = (&self.data, &self.codebook);
        if c.patch == 0 || d.canvas == 0 || d.canvas % c.patch != 0 {
            return bad(format!("canvas {} must be a positive multiple of patch {}", d.canvas, c.patch));
        }
        if d.train == 0 || d.eval == 0 {
            return bad("data.train and data.eval must be positive".into());
        }
        if c.k < 2 || c.samples == 0 || c.max_iters == 0 {
            return bad("codebook needs k >= 2, samples > 0 and max_iters > 0".into());
        }
        let t = &self.eval.thresholds;
        if t.is_empty() || t.windows(2).any(|w| !(w[0] < w[1])) || t.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return bad(format!("eval.thresholds must be increasing values in [0, 1], got {t:?}"));
        }
        self.model_config().validate()?;
        self.train_config().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = Config::smoke();
        cfg.train.lr = Some(3e-4);
        cfg.decode.strategy = Strategy::TopP(0.9);
        let back = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn overrides_and_derived_fields() {
        let cfg = Config::from_toml(
            "seed = 7\n[train]\npreset = \"pretrain\"\nepochs = 3\ngrad_clip = 0\n[decode]\nstrategy = \"beam:3\"\n",
        )
        .unwrap();
        let t = cfg.train_config();
        assert_eq!(t.epochs, 3);
        assert_eq!(t.lr, 2e-4);
        assert_eq!(t.grad_clip, None);
        assert_eq!(cfg.decode.strategy, Strategy::Beam(3));
        let m = cfg.model_config();
        assert_eq!(m.vocab.mask_tokens, 1024);
        assert_eq!(m.patch_dim, 768);
        assert_eq!(m.ffn_hidden, 344);
        assert_ne!(m.seed, t.seed);
        assert_eq!(cfg.grid(), (4, 4));
        assert_eq!(cfg.eval_seed0(), 2000);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml("[data]\ncanvas = 60\n").is_err());
        assert!(Config::from_toml("[model]\nheads = 3\n").is_err());
        assert!(Config::from_toml("[eval]\nthresholds = [0.9, 0.5]\n").is_err());
        assert!(Config::from_toml("[model]\nvocab = 3\n").is_err());
        assert!(Config::from_toml("[decode]\nstrategy = \"nucleus\"\n").is_err());
    }
}
