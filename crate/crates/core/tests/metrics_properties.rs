mod common;

use common::ap_oracle;
use ferret_core::metrics::{accuracy, average_precision, ScoredBatch};
use proptest::prelude::*;

fn batch() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (1usize..=64).prop_flat_map(|n| {
        (
            // Coarse scores so ties are common.
            prop::collection::vec((0u32..=20).prop_map(|k| k as f64 / 20.0), n),
            prop::collection::vec(0u8..=1, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ap_matches_rank_oracle((scores, mut labels) in batch()) {
        if !labels.contains(&1) {
            labels[0] = 1;
        }
        let b = ScoredBatch::new(scores.clone(), labels.clone()).unwrap();
        let ap = average_precision(&b).unwrap();
        prop_assert!((ap - ap_oracle(&scores, &labels)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ap));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ap_depends_only_on_rank((scores, mut labels) in batch()) {
        if !labels.contains(&1) {
            labels[0] = 1;
        }
        let before = average_precision(&ScoredBatch::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s - 1.0).exp() / 7.0 + 0.01).collect();
        let after = average_precision(&ScoredBatch::new(squashed, labels).unwrap()).unwrap();
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn accuracy_ignores_joint_permutation((scores, labels) in batch(), seed in any::<u64>(), t in 0.0f64..1.0) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = accuracy(&ScoredBatch::new(scores.clone(), labels.clone()).unwrap(), t);
        let ps = idx.iter().map(|&i| scores[i]).collect();
        let pl = idx.iter().map(|&i| labels[i]).collect();
        let b = accuracy(&ScoredBatch::new(ps, pl).unwrap(), t);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn hand_computed_ap() {
    let b = ScoredBatch::new(vec![0.9, 0.8, 0.3], vec![1, 0, 1]).unwrap();
    assert!((average_precision(&b).unwrap() - 5.0 / 6.0).abs() < 1e-6);
    assert!((ap_oracle(&[0.9, 0.8, 0.3], &[1, 0, 1]) - 5.0 / 6.0).abs() < 1e-12);
}
