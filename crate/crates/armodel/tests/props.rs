mod common;

use common::{random_sequence, rng, tiny_config};
use maskgen_armodel::{cross_entropy, generate, Model, Strategy as Decode};
use proptest::prelude::*;

fn decode_strategy() -> impl Strategy<Value = Decode> {
    prop_oneof![
        Just(Decode::Greedy),
        Just(Decode::Random),
        (1usize..6).prop_map(Decode::Beam),
        (1usize..6).prop_map(Decode::TopK),
        (0.05f64..1.0).prop_map(Decode::TopP),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strategy_text_round_trips(s in decode_strategy()) {
        prop_assert_eq!(s.to_string().parse::<Decode>().unwrap(), s);
    }

    #[test]
    fn cross_entropy_gradient_rows_sum_to_zero(
        (vocab, logits, targets) in (2usize..8, 1usize..5).prop_flat_map(|(v, n)| (
            Just(v),
            prop::collection::vec(-5.0f64..5.0, v * n),
            prop::collection::vec(0u32..v as u32, n),
        ))
    ) {
        let (loss, grad) = cross_entropy(&logits, vocab, &targets).unwrap();
        prop_assert!(loss >= 0.0);
        for row in grad.chunks(vocab) {
            prop_assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn every_strategy_emits_in_range_tokens(s in decode_strategy(), model_seed in 0u64..50, seed in any::<u64>(), n in 1usize..8) {
        let cfg = tiny_config(model_seed);
        let model = Model::<f32>::init(cfg.clone()).unwrap();
        let prefix = random_sequence(&cfg, &mut rng(model_seed), 0);
        let out = generate(&model, &prefix, n, s, seed).unwrap();
        prop_assert_eq!(out.len(), n);
        prop_assert!(out.iter().all(|&t| (t as usize) < cfg.vocab.mask_tokens));
        prop_assert_eq!(generate(&model, &prefix, n, s, seed).unwrap(), out);
    }
}
