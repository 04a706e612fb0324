use mvdet_core::matchloss::{
    brute_force_assignment, focal_loss, hungarian, set_loss, CostMatrix, CostWeights, FocalParams, LossInput,
};
use mvdet_core::synth::{default_object_bounds, gen_objects};
use mvdet_core::seeded_rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn matrix() -> impl Strategy<Value = CostMatrix> {
    (1usize..7, 1usize..7).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0..10.0f64, r * c).prop_map(move |v| CostMatrix::new(r, c, v).unwrap())
    })
}

fn integer_matrix() -> impl Strategy<Value = CostMatrix> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3i32..4, r * c)
            .prop_map(move |v| CostMatrix::new(r, c, v.into_iter().map(f64::from).collect()).unwrap())
    })
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

proptest! {
    #[test]
    fn hungarian_is_optimal(c in matrix()) {
        let a = hungarian(&c);
        let b = brute_force_assignment(&c);
        prop_assert_eq!(a.pairs.len(), c.rows().min(c.cols()));
        prop_assert!((a.total_cost - b.total_cost).abs() <= 1e-9);
    }

    #[test]
    fn hungarian_matches_oracle_with_ties(c in integer_matrix()) {
        prop_assert_eq!(hungarian(&c), brute_force_assignment(&c));
    }

    #[test]
    fn constant_shift_keeps_pairs(c in integer_matrix(), k in -5i32..6) {
        let shifted = CostMatrix::new(c.rows(), c.cols(), c.values().iter().map(|v| v + k as f64).collect()).unwrap();
        let a = hungarian(&c);
        let b = hungarian(&shifted);
        prop_assert_eq!(&a.pairs, &b.pairs);
        prop_assert_eq!(b.total_cost, a.total_cost + a.pairs.len() as f64 * k as f64);
    }

    #[test]
    fn transpose_gives_transposed_assignment(c in matrix()) {
        let a = hungarian(&c);
        let t = hungarian(&c.transpose());
        prop_assert!((a.total_cost - t.total_cost).abs() <= 1e-9);
        let mut flipped: Vec<(usize, usize)> = t.pairs.iter().map(|&(p, g)| (g, p)).collect();
        flipped.sort_unstable();
        let cost: f64 = flipped.iter().map(|&(r, k)| c.get(r, k)).sum();
        prop_assert!((cost - a.total_cost).abs() <= 1e-9);
    }

    #[test]
    fn focal_nonnegative_and_decreasing(p1 in 0.001..0.999f64, dp in 0.0001..0.5f64, alpha in 0.05..0.95f64, gamma in 0.0..4.0f64) {
        let p2 = (p1 + dp).min(0.9999);
        prop_assume!(p2 > p1);
        let params = FocalParams { alpha, gamma };
        let l1 = focal_loss(&[p1, 1.0 - p1], Some(0), params).unwrap().value;
        let l2 = focal_loss(&[p2, 1.0 - p2], Some(0), params).unwrap().value;
        prop_assert!(l1 >= 0.0 && l2 >= 0.0);
        prop_assert!(l2 < l1);
    }

    #[test]
    fn set_loss_permutation_invariant(seed: u64, n_pred in 0usize..8, n_gt in 0usize..8) {
        let mut rng = seeded_rng(seed);
        let gts = gen_objects(seed, n_gt, &default_object_bounds());
        let preds: Vec<LossInput> = gen_objects(seed.wrapping_add(1), n_pred, &default_object_bounds())
            .into_iter()
            .map(|bbox| LossInput {
                probs: softmax(&(0..10).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<_>>()),
                bbox,
            })
            .collect();
        let w = CostWeights::default();
        let f = FocalParams::default();
        let (base, _) = set_loss(&preds, &gts, w, f).unwrap();
        let mut p2 = preds.clone();
        let mut g2 = gts.clone();
        p2.shuffle(&mut rng);
        g2.shuffle(&mut rng);
        let (shuffled, _) = set_loss(&p2, &g2, w, f).unwrap();
        prop_assert!((base.total - shuffled.total).abs() <= 1e-12 * (1.0 + base.total.abs()));
    }
}
