mod common;

use pbr_core::blankcoder::{rpe_distances, visible_zone, Dropout};
use pbr_core::embedding::pe_rows;
use pbr_core::numerics::{Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(100)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn alpha_is_a_distribution_confined_to_the_zone(seed in any::<u64>(), n in 1usize..=20, k in 1usize..=5) {
        let model = common::toy_model(common::toy_encoder(k, 1), seed);
        let s = common::random_sentence(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), n);
        let trace = model.trace_sentence(&s).unwrap();
        prop_assert_eq!(trace.alpha.len(), n);
        let total: f64 = trace.alpha.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "sum {}", total);
        let zone = visible_zone(s.gap_index, k, n);
        for (j, a) in trace.alpha.iter().enumerate() {
            if zone.contains(j + 1) {
                prop_assert!(*a >= 0.0);
            } else {
                prop_assert_eq!(*a, 0.0);
            }
        }
    }

    #[test]
    fn beta_lies_strictly_inside_the_unit_interval(seed in any::<u64>(), n in 1usize..=20, blocks in 1usize..=3) {
        let model = common::toy_model(common::toy_encoder(3, blocks), seed);
        let s = common::random_sentence(&mut ChaCha8Rng::seed_from_u64(seed ^ 2), n);
        let trace = model.trace_sentence(&s).unwrap();
        prop_assert_eq!(trace.beta_blocks.len(), blocks);
        for beta in &trace.beta_blocks {
            prop_assert_eq!(beta.len(), n);
            prop_assert!(beta.iter().all(|b| *b > 0.0 && *b < 1.0));
        }
    }

    #[test]
    fn rpe_terms_depend_only_on_distance(n in 1usize..=30, gap_frac in 0.0f64..=1.0) {
        let gap = ((n as f64) * gap_frac).round() as usize;
        let model = common::toy_model(common::toy_encoder(3, 1), 0);
        let mut tape = Tape::new();
        let zeros = tape.constant(Tensor::zeros(vec![n, 8]));
        let b0 = tape.constant(Tensor::zeros(vec![1, 8]));
        let (h, b) = model.encoder.add_rpe(&mut tape, Some(zeros), b0, gap).unwrap();
        let h = tape.value(h.unwrap()).clone();
        let dist = rpe_distances(gap, n);
        for i in 0..n {
            prop_assert!(dist[i] >= 1);
            for j in 0..n {
                if dist[i] == dist[j] {
                    prop_assert_eq!(h.row_slice(i), h.row_slice(j));
                }
            }
        }
        // The blank itself gets PE at distance 0, which no word shares.
        let pe0 = pe_rows(&[0], 8).unwrap();
        prop_assert_eq!(tape.value(b).data(), pe0.data());
    }

    #[test]
    fn encoding_is_deterministic(seed in any::<u64>(), n in 0usize..=16) {
        let model = common::toy_model(common::toy_encoder(2, 2), seed);
        let s = common::random_sentence(&mut ChaCha8Rng::seed_from_u64(seed ^ 3), n);
        let run = || {
            let mut tape = Tape::new();
            let e = model.encoder.encode(&mut tape, &model.store, &model.vocab, &s, &mut Dropout::eval()).unwrap();
            tape.value(e.b).clone()
        };
        let (a, b) = (run(), run());
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn symmetric_prediction_ignores_order(seed in any::<u64>(), n1 in 1usize..=12, n2 in 1usize..=12) {
        let model = common::toy_model(common::toy_encoder(3, 1), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let (s1, s2) = (common::random_sentence(&mut rng, n1), common::random_sentence(&mut rng, n2));
        let mut tape = Tape::new();
        let mut dropout = Dropout::eval();
        let a = model.encoder.encode(&mut tape, &model.store, &model.vocab, &s1, &mut dropout).unwrap().b;
        let b = model.encoder.encode(&mut tape, &model.store, &model.vocab, &s2, &mut dropout).unwrap().b;
        let ab = model.head.predict_symmetric(&mut tape, &model.store, a, b).unwrap();
        let ba = model.head.predict_symmetric(&mut tape, &model.store, b, a).unwrap();
        prop_assert_eq!(tape.scalar(ab).to_bits(), tape.scalar(ba).to_bits());
        prop_assert!(tape.scalar(ab) > 0.0 && tape.scalar(ab) < 1.0);
    }

    #[test]
    fn zone_never_exceeds_2k_positions(i in 0usize..=40, k in 1usize..=8, n in 1usize..=40) {
        let i = i.min(n);
        let z = visible_zone(i, k, n);
        prop_assert!(z.len() <= 2 * k);
        prop_assert!(z.start >= 1 && z.end <= n);
        prop_assert!(z.positions().all(|p| rpe_distances(i, n)[p - 1] <= k));
    }
}
