use std::f64::consts::LN_2;

use proptest::prelude::*;

use ezsort_core::preorder::{
    bucket_of, classify_level, init_rating, rating_base, run_preorder, EloInitConfig, ItemLevels, ItemRecord,
    SimilarityTable,
};
use ezsort_core::rating::{
    current_threshold, elo_update, expected_score, info_gain, uncertainty_from_priority, EloState, ExponentMode,
    Outcome, ThresholdConfig, ThresholdState,
};
use ezsort_core::SplitMix64;

proptest! {
    #[test]
    fn bucket_is_monotone_and_in_range(d in 1u32..=16, k in 1u32..=64, a in any::<u32>(), b in any::<u32>()) {
        let groups = 1u64 << d;
        let (g1, g2) = ((a as u64 % groups) as u32, (b as u64 % groups) as u32);
        let (lo, hi) = (g1.min(g2), g1.max(g2));
        let (b_lo, b_hi) = (bucket_of(lo, d, k).unwrap(), bucket_of(hi, d, k).unwrap());
        prop_assert!(b_lo <= b_hi);
        prop_assert!(b_hi < k);
    }

    #[test]
    fn bucket_is_surjective_when_groups_cover_buckets(d in 1u32..=10, k in 1u32..=64) {
        prop_assume!((1u32 << d) >= k);
        let mut seen = vec![false; k as usize];
        for g in 0..(1u32 << d) {
            seen[bucket_of(g, d, k).unwrap() as usize] = true;
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn confidence_is_shift_invariant(s0 in -1.0f64..1.0, s1 in -1.0f64..1.0, c in -1.0f64..1.0, tau in 0.01f64..1.0) {
        let a = classify_level([s0, s1], tau).unwrap();
        let b = classify_level([s0 + c, s1 + c], tau).unwrap();
        prop_assert!((a.confidence - b.confidence).abs() < 1e-9);
        prop_assert!((0.5..=1.0).contains(&a.confidence));
    }

    #[test]
    fn swapping_scores_flips_decision(s0 in -1.0f64..1.0, s1 in -1.0f64..1.0, tau in 0.01f64..1.0) {
        prop_assume!(s0 != s1);
        let a = classify_level([s0, s1], tau).unwrap();
        let b = classify_level([s1, s0], tau).unwrap();
        prop_assert_eq!(a.decision, 1 - b.decision);
        prop_assert_eq!(a.confidence, b.confidence);
    }

    #[test]
    fn init_rating_stays_near_base(b in 0u32..5, conf in 1e-6f64..=1.0, seed in any::<u64>()) {
        let cfg = EloInitConfig::default();
        let mut rng = SplitMix64::new(seed);
        let r = init_rating(b, conf, &cfg, &mut rng).unwrap();
        let dev = (r - rating_base(b, &cfg).unwrap()).abs();
        prop_assert!(dev <= 1.5 * cfg.noise_halfwidth);
        if conf >= 0.5 {
            prop_assert!(dev <= cfg.noise_halfwidth);
        }
    }

    #[test]
    fn preorder_is_deterministic(seed in any::<u64>(), scores in prop::collection::vec(prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6), 1..20)) {
        let items: Vec<ItemRecord> = (0..scores.len()).map(|i| ItemRecord::new(format!("i{i}"), "", None)).collect();
        let sims = SimilarityTable {
            tau: 0.1,
            items: scores.iter().enumerate().map(|(i, lv)| {
                (format!("i{i}"), ItemLevels { levels: lv.iter().map(|&(a, b)| [a, b]).collect() })
            }).collect(),
        };
        let cfg = EloInitConfig { rng_seed: seed, ..EloInitConfig::default() };
        let a = run_preorder(&items, &sims, &cfg).unwrap();
        let b = run_preorder(&items, &sims, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        for r in &a {
            prop_assert!(r.group_index < 1 << r.depth);
            prop_assert!(r.bucket < cfg.bucket_count);
        }
    }

    #[test]
    fn info_gain_is_symmetric_and_bounded(p in 1e-9f64..(1.0 - 1e-9)) {
        let g = info_gain(p).unwrap();
        prop_assert!((g - info_gain(1.0 - p).unwrap()).abs() < 1e-9);
        prop_assert!((0.0..LN_2).contains(&g));
    }

    #[test]
    fn info_gain_increases_above_half(a in 0.5f64..0.999, b in 0.5f64..0.999) {
        prop_assume!(a < b);
        prop_assert!(info_gain(a).unwrap() < info_gain(b).unwrap());
    }

    #[test]
    fn uncertainty_in_unit_interval(ig in 0.0f64..LN_2, gamma in 1.0f64..1.2, phi in 1.0f64..2.0) {
        let u = uncertainty_from_priority(ig * gamma * phi);
        prop_assert!((0.0..=1.0).contains(&u));
    }

    #[test]
    fn threshold_monotone(done_a in 0u64..=200, done_b in 0u64..=200, acc_a in 0.0f64..=1.0, acc_b in 0.0f64..=1.0) {
        let mut ts = ThresholdState::new(ThresholdConfig::default(), 200);
        ts.accuracy = acc_a;
        ts.comparisons_done = done_a.min(done_b);
        let early = current_threshold(&ts);
        ts.comparisons_done = done_a.max(done_b);
        prop_assert!(current_threshold(&ts) <= early);

        ts.accuracy = acc_a.min(acc_b);
        let low = current_threshold(&ts);
        ts.accuracy = acc_a.max(acc_b);
        prop_assert!(current_threshold(&ts) <= low);
        prop_assert!(current_threshold(&ts) > 0.0);
        ts.config.exponent_mode = ExponentMode::Inverted;
        let high_inv = current_threshold(&ts);
        ts.accuracy = acc_a.min(acc_b);
        prop_assert!(current_threshold(&ts) <= high_inv);
    }
}

#[test]
fn expected_score_antisymmetry() {
    let mut rng = SplitMix64::new(1);
    for _ in 0..1_000_000 {
        let a = rng.uniform(0.0, 3000.0);
        let b = rng.uniform(0.0, 3000.0);
        let (p, q) = (expected_score(a, b), expected_score(b, a));
        assert!((p + q - 1.0).abs() < 1e-12);
        assert!(p > 0.0 && p < 1.0);
    }
}

#[test]
fn elo_update_conserves_sum() {
    let mut rng = SplitMix64::new(2);
    let n = 64;
    let mut elo = EloState::new((0..n).map(|_| rng.uniform(1000.0, 2000.0)).collect(), 32.0);
    let start = elo.sum();
    for _ in 0..1_000_000 {
        let i = rng.below(n);
        let j = (i + 1 + rng.below(n - 1)) % n;
        let o = [Outcome::LeftFirst, Outcome::RightFirst, Outcome::Equal][rng.below(3)];
        let before = elo.ratings[i] + elo.ratings[j];
        elo_update(&mut elo, i, j, o).unwrap();
        assert!((elo.ratings[i] + elo.ratings[j] - before).abs() < 1e-9);
    }
    assert!((elo.sum() - start).abs() < 1e-6);
}
