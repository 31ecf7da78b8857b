mod common;

use common::{brute_force_eer, labelled_scores, random_score_sets, simplex_count};
use multires::eval::{
    compute_eer, fuse_scores, search_fusion_weights, simplex_grid, utterance_score, ScoreTable,
};
use multires::tensor::Tensor;
use proptest::prelude::*;

#[test]
fn eer_matches_brute_force_on_random_sets() {
    for seed in 0..300 {
        let (bona, spoof) = random_score_sets(seed);
        let (s, l) = labelled_scores(&bona, &spoof);
        let got = compute_eer(&s, &l).unwrap();
        let want = brute_force_eer(&bona, &spoof);
        assert!((got.eer - want).abs() < 1e-12, "seed {seed}: {} vs {want}", got.eer);
        assert_eq!((got.n_target, got.n_nontarget), (bona.len(), spoof.len()));
        assert!((0.0..=1.0).contains(&got.eer));
    }
}

#[test]
fn eer_is_invariant_to_increasing_transforms() {
    for seed in 0..50 {
        let (bona, spoof) = random_score_sets(seed);
        let (s, l) = labelled_scores(&bona, &spoof);
        let base = compute_eer(&s, &l).unwrap().eer;
        for f in [|x: f64| 3.0 * x - 7.0, |x: f64| x.exp(), |x: f64| x.powi(3) + x] {
            let t: ScoreTable = s.iter().map(|(id, v)| (id.to_string(), f(v))).collect();
            assert!((compute_eer(&t, &l).unwrap().eer - base).abs() < 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn swapping_classes_and_negating_scores_keeps_the_eer() {
    for seed in 0..50 {
        let (bona, spoof) = random_score_sets(seed);
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let (s1, l1) = labelled_scores(&bona, &spoof);
        let (s2, l2) = labelled_scores(&neg(&spoof), &neg(&bona));
        let a = compute_eer(&s1, &l1).unwrap().eer;
        let b = compute_eer(&s2, &l2).unwrap().eer;
        // thresholds accept at equality, so ties shift by at most one count
        let slack = 1.0 / bona.len().min(spoof.len()) as f64;
        if seed % 3 == 0 {
            assert!((a - b).abs() <= slack, "seed {seed}: {a} vs {b}");
        } else {
            assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn one_hot_fusion_returns_that_system() {
    let systems: Vec<ScoreTable> = (0..3)
        .map(|k| labelled_scores(&random_score_sets(k).0[..1], &[k as f64, 2.0]).0)
        .collect();
    for k in 0..3 {
        let mut w = vec![0.0; 3];
        w[k] = 1.0;
        assert_eq!(fuse_scores(&systems, &w).unwrap(), systems[k]);
    }
}

#[test]
fn searched_weights_never_lose_to_the_best_single_system() {
    for seed in 0..20 {
        let (bona, spoof) = random_score_sets(seed + 1000);
        let (a, labels) = labelled_scores(&bona, &spoof);
        let noisy = |offset: u64| -> ScoreTable {
            let (nb, ns) = random_score_sets(seed * 31 + offset);
            a.iter()
                .enumerate()
                .map(|(i, (id, v))| (id.to_string(), v + nb.iter().chain(&ns).cycle().nth(i).unwrap()))
                .collect()
        };
        let tables = vec![a.clone(), noisy(1), noisy(2)];
        let best_single = tables
            .iter()
            .map(|t| compute_eer(t, &labels).unwrap().eer)
            .fold(f64::INFINITY, f64::min);
        let found = search_fusion_weights(&tables, &labels, 0.1).unwrap();
        assert!(found.dev_eer <= best_single + 1e-12, "seed {seed}");
        assert_eq!(found.evaluated, simplex_count(3, 10));
        assert!((found.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn simplex_grid_sizes_and_sums() {
    for n in 1..5 {
        for k in [1, 2, 5, 10, 20] {
            let g = simplex_grid(n, k);
            assert_eq!(g.len(), simplex_count(n, k), "n={n} k={k}");
            assert!(g.iter().all(|p| p.len() == n && p.iter().sum::<usize>() == k));
            assert!(g.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn mismatched_utterances_are_named() {
    let (a, _) = labelled_scores(&[1.0, 2.0], &[0.0]);
    let (b, _) = labelled_scores(&[1.0], &[0.0, 1.0]);
    let err = fuse_scores(&[a, b], &[0.5, 0.5]).unwrap_err().to_string();
    assert!(err.contains("b0001") && err.contains("s0001"), "{err}");
}

proptest! {
    #[test]
    fn utterance_score_is_mean_bonafide_log_probability(logits in prop::collection::vec(-5.0f32..5.0, 10..=50)) {
        let n = logits.len() / 10;
        let t = Tensor::new(vec![n, 10], logits[..n * 10].to_vec()).unwrap();
        let want: f64 = t
            .data()
            .chunks(10)
            .map(|row| {
                let m = row.iter().cloned().fold(f32::MIN, f32::max) as f64;
                let lse = m + row.iter().map(|&v| (v as f64 - m).exp()).sum::<f64>().ln();
                row[0] as f64 - lse
            })
            .sum::<f64>()
            / n as f64;
        let got = utterance_score(&t).unwrap();
        prop_assert!(got <= 0.0);
        prop_assert!((got - want).abs() < 1e-5);
    }
}
