//! Information quantities checked against brute-force reference computations.

use lbb_core::acquisition::{select, select_batchbald, select_lbb, PairwisePath, Strategy, StrategyParams};
use lbb_core::joint::{
    batchbald_score, identity_residual, joint_entropy_exact, joint_entropy_mc, total_correlation_exact, JointMode,
};
use lbb_core::pairwise::{pairwise_mi, pairwise_mi_block, total_correlation_pairwise, PairwiseMiMatrix};
use lbb_core::scores::{bald_scores, entropy_scores};
use lbb_core::PosteriorTensor;
use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(n: usize, k: usize, c: usize, seed: u64) -> PosteriorTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PosteriorTensor::from_rows(n, k, c, |_, _| {
        let e: Vec<f64> = (0..c).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    })
    .unwrap()
}

/// Enumerates every label configuration of `subset` and averages member products.
fn brute_joint_entropy(t: &PosteriorTensor, subset: &[usize]) -> f64 {
    let (k, c) = (t.members(), t.classes());
    let total = c.pow(subset.len() as u32);
    let mut h = 0.0;
    for code in 0..total {
        let mut labels = Vec::with_capacity(subset.len());
        let mut rest = code;
        for _ in subset {
            labels.push(rest % c);
            rest /= c;
        }
        let p: f64 = (0..k)
            .map(|j| subset.iter().zip(&labels).map(|(&i, &y)| t.get(i, j, y)).product::<f64>())
            .sum::<f64>()
            / k as f64;
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

fn naive_mi(t: &PosteriorTensor, i: usize, j: usize) -> f64 {
    let hi = brute_joint_entropy(t, &[i]);
    let hj = brute_joint_entropy(t, &[j]);
    hi + hj - brute_joint_entropy(t, &[i, j])
}

#[test]
fn exact_joint_entropy_matches_enumeration() {
    let t = random_tensor(3, 2, 2, 11);
    let got = joint_entropy_exact(&t, &[0, 1, 2]).unwrap();
    assert!((got - brute_joint_entropy(&t, &[0, 1, 2])).abs() < 1e-12);
    for seed in 0..20 {
        let t = random_tensor(5, 3, 3, seed);
        let got = joint_entropy_exact(&t, &[4, 0, 2, 1]).unwrap();
        assert!((got - brute_joint_entropy(&t, &[4, 0, 2, 1])).abs() < 1e-12);
    }
}

#[test]
fn exact_total_correlation_is_entropy_difference() {
    let t = random_tensor(3, 3, 2, 5);
    let h: f64 = (0..3).map(|i| brute_joint_entropy(&t, &[i])).sum();
    let want = h - brute_joint_entropy(&t, &[0, 1, 2]);
    assert!((total_correlation_exact(&t, &[0, 1, 2]).unwrap() - want).abs() < 1e-12);
}

#[test]
fn mc_joint_entropy_tracks_exact() {
    let t = random_tensor(4, 4, 3, 2024);
    let subset = [0, 1, 2, 3];
    let exact = joint_entropy_exact(&t, &subset).unwrap();
    let a = joint_entropy_mc(&t, &subset, 100_000, 1).unwrap();
    let b = joint_entropy_mc(&t, &subset, 100_000, 2).unwrap();
    assert!(((a - exact) / exact).abs() < 1e-2);
    assert!(((b - exact) / exact).abs() < 1e-2);
    assert_ne!(a.to_bits(), b.to_bits());
}

#[test]
fn pairwise_tile_matches_double_loop() {
    let t = random_tensor(8, 4, 3, 8);
    let tile = pairwise_mi_block(&t, 0..8, 0..8).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let want = if i == j { 0.0 } else { naive_mi(&t, i, j) };
            assert!((tile.get(i, j) - want).abs() < 1e-12, "({i},{j})");
        }
    }
    // off-diagonal tiles index with global coordinates
    let part = pairwise_mi_block(&t, 2..5, 6..8).unwrap();
    assert!((part.get(3, 7) - naive_mi(&t, 3, 7)).abs() < 1e-12);
}

#[test]
fn two_point_relations() {
    for seed in 0..10 {
        let t = random_tensor(2, 3, 3, seed);
        let mi = pairwise_mi(&t, 0, 1).unwrap();
        assert!((total_correlation_exact(&t, &[0, 1]).unwrap() - mi).abs() < 1e-10);
        assert!((total_correlation_pairwise(&t, &[0, 1]).unwrap() - 2.0 * mi).abs() < 1e-12);
    }
}

/// Recomputes the batch objective from scratch for every candidate.
fn greedy_oracle(t: &PosteriorTensor, b: usize) -> (Vec<usize>, Vec<f64>) {
    let mut chosen: Vec<usize> = Vec::new();
    let mut gains = Vec::new();
    let mut prev = 0.0;
    for _ in 0..b {
        let mut best: Option<(usize, f64)> = None;
        for x in (0..t.pool_size()).filter(|x| !chosen.contains(x)) {
            let mut s = chosen.clone();
            s.push(x);
            let v = batchbald_score(t, &s, JointMode::Exact).unwrap().score;
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((x, v));
            }
        }
        let (x, v) = best.unwrap();
        chosen.push(x);
        gains.push(v - prev);
        prev = v;
    }
    (chosen, gains)
}

#[test]
fn greedy_batchbald_matches_recomputation() {
    for seed in 0..10 {
        let t = random_tensor(6, 3, 2, 100 + seed);
        let batch = select_batchbald(&t, 3, &StrategyParams::default()).unwrap();
        let (indices, gains) = greedy_oracle(&t, 3);
        assert_eq!(batch.indices, indices);
        for (g, o) in batch.gains.iter().zip(&gains) {
            assert!((g - o).abs() < 1e-10);
        }
    }
}

#[test]
fn lazy_and_full_pairwise_paths_agree() {
    let t = random_tensor(40, 4, 3, 77);
    let run = |pairwise| {
        select_lbb(
            &t,
            8,
            &StrategyParams {
                pairwise,
                ..Default::default()
            },
        )
        .unwrap()
    };
    let (full, lazy) = (run(PairwisePath::Full), run(PairwisePath::Lazy));
    assert_eq!(full.indices, lazy.indices);
    for (a, b) in full.gains.iter().zip(&lazy.gains) {
        assert!((a - b).abs() < 1e-12);
    }
    let m = PairwiseMiMatrix::compute(&t, 100).unwrap();
    assert!((m.get(3, 17) - pairwise_mi(&t, 3, 17).unwrap()).abs() < 1e-12);
}

#[test]
fn lbb_never_takes_two_copies_of_the_top_point() {
    let base = random_tensor(10, 4, 3, 9);
    let bald = bald_scores(&base).0.values;
    let top = (0..10).fold(0, |b, i| if bald[i] > bald[b] { i } else { b });
    // pool = the original ten points plus two more copies of the top one
    let mut rows = base.as_slice().to_vec();
    for _ in 0..2 {
        rows.extend_from_slice(base.point(top));
    }
    let t = PosteriorTensor::new(12, 4, 3, rows).unwrap();
    let batch = select_lbb(&t, 4, &StrategyParams::default()).unwrap();
    let copies = batch.indices.iter().filter(|&&i| i == top || i >= 10).count();
    assert_eq!(copies, 1, "{:?}", batch.indices);
}

#[test]
fn first_picks_coincide() {
    for seed in 0..30 {
        let t = random_tensor(25, 3, 4, 500 + seed);
        let p = StrategyParams::default();
        let first = |s| select(&t, s, 2, &p).unwrap().indices[0];
        assert_eq!(first(Strategy::BatchBald), first(Strategy::Bald));
        assert_eq!(first(Strategy::Lbb), first(Strategy::Bald));
    }
}

#[test]
fn identity_holds_on_larger_exact_instances() {
    for seed in 0..20 {
        let t = random_tensor(5, 4, 3, 900 + seed);
        assert!(identity_residual(&t, &[0, 1, 2, 3, 4]).unwrap().abs() < 1e-9);
    }
}

fn arb_small() -> impl proptest::strategy::Strategy<Value = PosteriorTensor> {
    (2usize..5, 2usize..4, 1usize..5, any::<u64>()).prop_map(|(n, c, k, seed)| random_tensor(n, k, c, seed))
}

proptest! {
    #[test]
    fn batchbald_is_bounded_by_summed_bald(t in arb_small()) {
        let subset: Vec<usize> = (0..t.pool_size()).collect();
        let bb = batchbald_score(&t, &subset, JointMode::Exact).unwrap().score;
        let sum: f64 = bald_scores(&t).0.values.iter().sum();
        prop_assert!(bb <= sum + 1e-9);
        prop_assert!(total_correlation_exact(&t, &subset).unwrap() >= -1e-9);
    }

    #[test]
    fn joint_entropy_ignores_subset_order(t in arb_small()) {
        let fwd: Vec<usize> = (0..t.pool_size()).collect();
        let rev: Vec<usize> = fwd.iter().rev().copied().collect();
        let a = joint_entropy_exact(&t, &fwd).unwrap();
        let b = joint_entropy_exact(&t, &rev).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn pairwise_mi_is_symmetric_and_bounded(t in arb_small()) {
        let ij = pairwise_mi(&t, 0, 1).unwrap();
        let ji = pairwise_mi(&t, 1, 0).unwrap();
        prop_assert!((ij - ji).abs() < 1e-12);
        prop_assert!(ij >= -1e-12);
        let h = entropy_scores(&t).values;
        prop_assert!(ij <= h[0].min(h[1]) + 1e-12);
        prop_assert!(total_correlation_pairwise(&t, &[0, 1]).unwrap() >= -1e-9);
    }

    #[test]
    fn pairwise_mi_survives_member_permutation(t in arb_small(), shift in 0usize..5) {
        let (n, k, c) = (t.pool_size(), t.members(), t.classes());
        let shifted = PosteriorTensor::from_rows(n, k, c, |i, j| t.row(i, (j + shift) % k).to_vec()).unwrap();
        let a = pairwise_mi(&t, 0, 1).unwrap();
        let b = pairwise_mi(&shifted, 0, 1).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
