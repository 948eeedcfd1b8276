mod common;

use common::brute_force_tie_metrics;
use pathmix_core::eval::{evaluate_with, hits_at_k, make_queries, mrr_of, rank_query, EvalMode};
use pathmix_core::{KnownAnswers, Triple};
use proptest::prelude::*;

#[test]
fn tie_metrics_match_permutation_average() {
    for n in 0..=5 {
        for m in 1..=5 {
            for k in 1..=12 {
                let (rr, hits) = brute_force_tie_metrics(n, m, k);
                assert!((mrr_of(n, m) - rr).abs() <= 1e-12, "mrr n={n} m={m}");
                assert!((hits_at_k(n, m, k) - hits).abs() <= 1e-12, "hits n={n} m={m} k={k}");
            }
        }
    }
}

proptest! {
    // scores drawn from a tiny set so ties are common
    #[test]
    fn rank_query_matches_naive_count(
        scores in prop::collection::vec(0u8..4, 1..40),
        t in any::<prop::sample::Index>(),
        filt in prop::collection::vec(any::<prop::sample::Index>(), 0..10),
    ) {
        let s: Vec<f64> = scores.iter().map(|&x| x as f64 * 0.5).collect();
        let nv = s.len();
        let target = t.index(nv) as u32;
        let filtered: Vec<u32> = filt.iter().map(|i| i.index(nv) as u32).collect();
        let (n, m) = rank_query(&s, target, &filtered, nv);
        let mut kept: Vec<usize> = (0..nv).filter(|v| *v == target as usize || !filtered.contains(&(*v as u32))).collect();
        kept.dedup();
        let ts = s[target as usize];
        prop_assert_eq!(n, kept.iter().filter(|&&v| s[v] > ts).count());
        prop_assert_eq!(m, kept.iter().filter(|&&v| s[v] == ts).count());
    }

    #[test]
    fn metrics_are_bounded_and_monotone(n in 0usize..50, m in 1usize..50, k in 1usize..20) {
        let r = mrr_of(n, m);
        prop_assert!(r > 0.0 && r <= 1.0);
        prop_assert!(mrr_of(n + 1, m) < r);
        prop_assert!(hits_at_k(n, m, k) <= hits_at_k(n, m, k + 1));
    }
}

#[test]
fn filtered_answers_do_not_outrank_the_target() {
    // vertex 2 is another known answer with a higher score
    let known = KnownAnswers::new(1, [Triple::new(0, 0, 1), Triple::new(0, 0, 2)].iter());
    let q = make_queries(&[Triple::new(0, 0, 1)], 1, EvalMode::DirectOnly);
    let r = evaluate_with(&q, 4, &known, EvalMode::DirectOnly, |_, _| Some(vec![0.0, 0.5, 0.9, 0.1])).unwrap();
    assert_eq!(r.mrr, 1.0);
    // inverse queries filter the head-side answers
    let q = make_queries(&[Triple::new(0, 0, 1)], 1, EvalMode::WithInverses);
    assert_eq!(q.len(), 2);
    let r = evaluate_with(&q, 4, &known, EvalMode::WithInverses, |_, _| Some(vec![0.9, 0.5, 0.9, 0.1])).unwrap();
    assert_eq!(r.results[1].n, 0);
    assert_eq!(r.results[1].m, 2);
}
