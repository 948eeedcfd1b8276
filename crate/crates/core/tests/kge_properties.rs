mod common;

use common::{enumerate_walks, small_graph};
use pathmix_core::{EdgeMask, EmbeddingTable, EmbeddingTrainConfig, KgeFamily, PathEngine, Triple};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_table(seed: u64, family: KgeFamily, n: usize, m: usize) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(1..9);
    let mut v = |rows: usize| (0..rows * dim).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
    let (head, relation) = (v(n), v(m));
    match family {
        KgeFamily::Similarity => EmbeddingTable::new(family, dim, None, n, m, head, v(n), relation),
        KgeFamily::Distance => EmbeddingTable::new(family, dim, Some(3.0), n, m, head, Vec::new(), relation),
    }
    .unwrap()
}

fn family() -> impl Strategy<Value = KgeFamily> {
    prop_oneof![Just(KgeFamily::Similarity), Just(KgeFamily::Distance)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn file_round_trip_is_exact(seed in 0u64..10_000, fam in family()) {
        let t = random_table(seed, fam, 7, 4);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        prop_assert_eq!(EmbeddingTable::parse(std::str::from_utf8(&buf).unwrap()).unwrap(), t);
    }

    #[test]
    fn scores_are_bounded_and_ordered(seed in 0u64..10_000, fam in family()) {
        let t = random_table(seed, fam, 7, 4);
        let (lo, hi) = match fam {
            KgeFamily::Similarity => (0.0, 1.0),
            KgeFamily::Distance => (-1.0, 1.0),
        };
        for h in 0..7 {
            for r in 0..4 {
                let raw = t.tail_scores(h, r).unwrap();
                let s: Vec<f64> = (0..7).map(|v| t.edge_score(&Triple::new(h, r, v)).unwrap()).collect();
                for a in 0..7 {
                    prop_assert!(s[a] >= lo && s[a] <= hi);
                    for b in 0..7 {
                        // the squashing transform is monotone
                        if raw[a] > raw[b] + 1e-9 {
                            prop_assert!(s[a] >= s[b]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn walk_masses_are_sums_of_edge_scores(seed in 0u64..10_000, fam in family()) {
        let g = small_graph(seed);
        let t = random_table(seed, fam, g.num_vertices(), g.num_relations());
        let weights = t.edge_weights(&g).unwrap();
        let engine = PathEngine::new(&g, 2).unwrap();
        let walks = enumerate_walks(&g, 2, &EdgeMask::none(), &|e| t.edge_score(e).unwrap());
        for ((u, v, rels), (_, mass)) in &walks {
            let table = engine.weighted_paths(*u, *v, &EdgeMask::none(), &weights).unwrap();
            let got = table.get(engine.codec().encode(rels).unwrap());
            prop_assert!((got - mass).abs() <= 1e-9 * (1.0 + mass.abs()));
        }
        for e in g.edges().iter().take(5) {
            let two = [*e, g.inverse_triple(e)];
            let expected = t.edge_score(&two[0]).unwrap() + t.edge_score(&two[1]).unwrap();
            prop_assert!((t.path_score(&two).unwrap() - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn trained_table_ranks_training_edges_first() {
    let g = small_graph(17);
    let cfg = EmbeddingTrainConfig {
        dim: 16,
        epochs: 200,
        negatives: 8,
        ..Default::default()
    };
    let table = pathmix_core::kge::train_embeddings(&g, &cfg).unwrap();
    let mut better = 0;
    let mut total = 0;
    for e in g.edges() {
        let raw = table.tail_scores(e.head, e.relation).unwrap();
        for v in 0..g.num_vertices() as u32 {
            if !g.contains(&Triple::new(e.head, e.relation, v)) {
                total += 1;
                if raw[e.tail as usize] > raw[v as usize] {
                    better += 1;
                }
            }
        }
    }
    assert!(total == 0 || better as f64 / total as f64 > 0.9, "{better}/{total}");
}

