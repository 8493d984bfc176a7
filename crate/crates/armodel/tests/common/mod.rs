#![allow(dead_code)]

use maskgen_armodel::{build_sequence, ModelConfig, Sequence};
use maskgen_core::vocab::Vocabulary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config(seed: u64) -> ModelConfig {
    ModelConfig {
        layers: 2,
        hidden: 16,
        heads: 2,
        ffn_hidden: 24,
        rope_base: 10_000.0,
        norm_eps: 1e-5,
        init_std: 0.1,
        seed,
        vocab: Vocabulary::new(12, 6),
        patch_dim: 8,
    }
}

/// Random `[text] <BOI> [image] <BOM> [mask]` sequence for `cfg`.
pub fn random_sequence(cfg: &ModelConfig, rng: &mut ChaCha8Rng, n_mask: usize) -> Sequence {
    let v = cfg.vocab;
    let text: Vec<u32> = (0..rng.gen_range(1..5))
        .map(|_| v.text_base() + rng.gen_range(0..v.text_vocab_size as u32))
        .collect();
    let n_img = rng.gen_range(1..5);
    let patches: Vec<f32> = (0..n_img * cfg.patch_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mask: Vec<u32> = (0..n_mask).map(|_| rng.gen_range(0..v.mask_tokens as u32)).collect();
    build_sequence(&v, &text, &patches, cfg.patch_dim, &mask).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
