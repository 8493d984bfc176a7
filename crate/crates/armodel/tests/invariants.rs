mod common;

use common::{random_sequence, rng, tiny_config};
use maskgen_armodel::{build_sequence, Checkpoint, Model, ModelConfig};
use maskgen_core::vocab::Vocabulary;
use rand::Rng;

#[test]
fn future_tokens_do_not_change_past_logits() {
    let cfg = tiny_config(1);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let v = cfg.vocab.size();
    let mut r = rng(10);
    for _ in 0..50 {
        let seq = random_sequence(&cfg, &mut r, 6);
        let base = model.forward(&seq).unwrap();
        let p = r.gen_range(seq.layout.bom_pos..seq.len() - 1);
        // perturb one future mask token
        let mut changed = seq.clone();
        let t = r.gen_range(p + 1..seq.len());
        changed.tokens[t] = (changed.tokens[t] + 1) % cfg.vocab.mask_tokens as u32;
        let out = model.forward(&changed).unwrap();
        assert_eq!(&base[..(p + 1) * v], &out[..(p + 1) * v]);
        // swap two future tokens
        let mut swapped = seq.clone();
        let (a, b) = (seq.len() - 1, seq.len() - 2);
        swapped.tokens.swap(a, b);
        let out = model.forward(&swapped).unwrap();
        assert_eq!(&base[..(b) * v], &out[..(b) * v]);
    }
}

#[test]
fn rotary_scores_depend_only_on_relative_position() {
    let cfg = tiny_config(4);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let mut r = rng(2);
    for _ in 0..10 {
        let seq = random_sequence(&cfg, &mut r, 4);
        let shift = r.gen_range(1..500);
        for layer in 0..cfg.layers {
            for head in 0..cfg.heads {
                let a = model.attention_scores(&seq, layer, head, 0).unwrap();
                let b = model.attention_scores(&seq, layer, head, shift).unwrap();
                let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
                assert!(worst < 1e-5, "layer {layer} head {head} shift {shift}: {worst}");
            }
        }
    }
}

#[test]
fn adaptor_maps_any_patch_width_to_hidden() {
    for pd in [1usize, 3, 768] {
        let cfg = ModelConfig {
            patch_dim: pd,
            ..tiny_config(0)
        };
        let model = Model::<f32>::init(cfg.clone()).unwrap();
        assert_eq!(model.layout.get("adaptor.w1").unwrap().shape, vec![pd, cfg.hidden]);
        assert_eq!(model.layout.get("adaptor.w2").unwrap().shape, vec![cfg.hidden, cfg.hidden]);
        let v = cfg.vocab;
        let seq = build_sequence(&v, &[v.text_base()], &vec![0.5; 2 * pd], pd, &[]).unwrap();
        assert_eq!(model.forward(&seq).unwrap().len(), seq.len() * v.size());
    }
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let cfg = ModelConfig::toy(Vocabulary::new(64, 10), 48);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let seq = random_sequence(&cfg, &mut rng(3), 16);
    let before = model.forward(&seq).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint {
        model,
        optimizer: None,
        meta: serde_json::Value::Null,
    }
    .save(&path)
    .unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let after = loaded.model.forward(&seq).unwrap();
    assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
}
