mod common;

use common::{random_sequence, rng, tiny_config};
use maskgen_armodel::{generate, generate_many, Model, Strategy};

#[test]
fn every_strategy_emits_exact_length_in_range() {
    let cfg = tiny_config(5);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let mut r = rng(1);
    for s in ["greedy", "beam:3", "topk:3", "topp:0.9", "random"] {
        let strategy: Strategy = s.parse().unwrap();
        for n in [1usize, 4, 7] {
            let prefix = random_sequence(&cfg, &mut r, 0);
            let out = generate(&model, &prefix, n, strategy, 42).unwrap();
            assert_eq!(out.len(), n, "{s}");
            assert!(out.iter().all(|&t| (t as usize) < cfg.vocab.mask_tokens), "{s}");
        }
    }
}

#[test]
fn greedy_is_reproducible_and_seed_free() {
    let cfg = tiny_config(6);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let prefix = random_sequence(&cfg, &mut rng(2), 0);
    let a = generate(&model, &prefix, 6, Strategy::Greedy, 1).unwrap();
    let b = generate(&model, &prefix, 6, Strategy::Greedy, 999).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sampling_is_seeded() {
    let cfg = tiny_config(6);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let prefix = random_sequence(&cfg, &mut rng(2), 0);
    let a = generate(&model, &prefix, 8, Strategy::Random, 7).unwrap();
    let b = generate(&model, &prefix, 8, Strategy::Random, 7).unwrap();
    assert_eq!(a, b);
}

#[test]
fn vanishing_top_p_is_greedy() {
    let cfg = tiny_config(8);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let mut r = rng(3);
    for i in 0..100 {
        let prefix = random_sequence(&cfg, &mut r, 0);
        let g = generate(&model, &prefix, 3, Strategy::Greedy, 0).unwrap();
        let p = generate(&model, &prefix, 3, Strategy::TopP(1e-12), i).unwrap();
        assert_eq!(g, p);
    }
}

#[test]
fn top_one_and_beam_one_are_greedy() {
    let cfg = tiny_config(9);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let mut r = rng(4);
    for i in 0..10 {
        let prefix = random_sequence(&cfg, &mut r, 0);
        let g = generate(&model, &prefix, 4, Strategy::Greedy, 0).unwrap();
        assert_eq!(generate(&model, &prefix, 4, Strategy::TopK(1), i).unwrap(), g);
        assert_eq!(generate(&model, &prefix, 4, Strategy::Beam(1), i).unwrap(), g);
    }
}

#[test]
fn beam_score_is_at_least_greedy_score() {
    let cfg = tiny_config(10);
    let model = Model::<f64>::init(cfg.clone()).unwrap();
    let mut r = rng(5);
    let v = cfg.vocab.size();
    // summed log-prob of a continuation under the restricted distribution
    let score = |prefix: &maskgen_armodel::Sequence, toks: &[u32]| {
        let seq = prefix.with_mask_tokens(toks);
        let logits = model.forward(&seq).unwrap();
        let k = cfg.vocab.mask_tokens;
        let mut total = 0.0;
        for (t, &tok) in toks.iter().enumerate() {
            let row = &logits[(seq.layout.bom_pos + t) * v..(seq.layout.bom_pos + t) * v + k];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            total += row[tok as usize] - lse;
        }
        total
    };
    for _ in 0..10 {
        let prefix = random_sequence(&cfg, &mut r, 0);
        let g = generate(&model, &prefix, 4, Strategy::Greedy, 0).unwrap();
        let b = generate(&model, &prefix, 4, Strategy::Beam(3), 0).unwrap();
        assert!(score(&prefix, &b) >= score(&prefix, &g) - 1e-12);
    }
}

#[test]
fn batch_generation_matches_single() {
    let cfg = tiny_config(11);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let mut r = rng(6);
    let prefixes: Vec<_> = (0..4).map(|_| random_sequence(&cfg, &mut r, 0)).collect();
    let many = generate_many(&model, &prefixes, 3, Strategy::TopK(3), 100).unwrap();
    for (i, p) in prefixes.iter().enumerate() {
        assert_eq!(many[i], generate(&model, p, 3, Strategy::TopK(3), 100 + i as u64).unwrap());
    }
}

#[test]
fn prefix_must_end_at_bom() {
    let cfg = tiny_config(12);
    let model = Model::<f32>::init(cfg.clone()).unwrap();
    let full = random_sequence(&cfg, &mut rng(7), 3);
    assert!(generate(&model, &full, 2, Strategy::Greedy, 0).is_err());
}
