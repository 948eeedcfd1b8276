mod common;

use common::{random_triples, recovers_rule, small_graph};
use pathmix_core::lnn::project_simplex;
use pathmix_core::training::{optimizer_step, sample_batch, train_relations, Adagrad};
use pathmix_core::{
    CmModel, KnowledgeGraph, KnownAnswers, ModelKind, MpModel, PathCodec, PathEngine, PathScorer, PathVocabulary,
    SourceCache, TrainConfig, TrainingData,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random gradients with heavy tails, so some steps land far outside the
/// feasible set.
fn fuzz_feasibility<M: PathScorer>(model: &mut M, seed: u64, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adagrad::new(model.num_params());
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let scale = 10f64.powi(rng.gen_range(-3..4));
        let grad: Vec<f64> = (0..model.num_params())
            .map(|_| if rng.gen_bool(0.5) { rng.gen_range(-scale..scale) } else { 0.0 })
            .collect();
        let eta = 10f64.powi(rng.gen_range(-4..1));
        optimizer_step(model, &mut opt, &grad, eta).unwrap();
        worst = worst.max(model.max_violation());
    }
    worst
}

#[test]
fn projected_steps_stay_feasible() {
    for seed in 0..3 {
        let mut cm = CmModel::new(0, 6, 3, 0.7).unwrap();
        assert!(fuzz_feasibility(&mut cm, seed, 1000) <= 1e-8);
        let codec = PathCodec::new(6, 3).unwrap();
        let paths: Vec<Vec<u32>> = (0..6).flat_map(|a| (0..6).map(move |b| vec![a, b])).collect();
        let vocab = PathVocabulary::from_paths(&codec, &paths).unwrap();
        let mut mp = MpModel::new(0, codec, vocab, false).unwrap();
        assert!(fuzz_feasibility(&mut mp, seed, 1000) <= 1e-8);
        let total: f64 = mp.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(project_simplex(mp.weights()).unwrap().len(), mp.weights().len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batches_honour_the_sampling_contract(seed in 0u64..10_000, b in 1usize..16) {
        let g = small_graph(seed);
        let rel = (seed % g.num_relations() as u64) as u32;
        prop_assume!(!g.edges_with_relation(rel).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match sample_batch(&g, rel, b, &mut rng) {
            Ok((pos, neg)) => {
                prop_assert_eq!(pos.len(), b);
                prop_assert_eq!(neg.len(), b);
                prop_assert!(pos.iter().all(|t| t.relation == rel && g.contains(t)));
                prop_assert!(neg.iter().all(|t| t.relation == rel && !g.contains(t)));
            }
            // every pair is an edge
            Err(pathmix_core::Error::SamplingSaturated { .. }) => {
                let n = g.num_vertices();
                prop_assert_eq!(g.edges_with_relation(rel).len(), n * n);
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let t = random_triples(&mut rng, 30, 3, 120);
    let g = KnowledgeGraph::augment_inverses(&t, 30, 3).unwrap();
    let valid: Vec<_> = t.iter().step_by(7).copied().collect();
    let known = KnownAnswers::new(3, &t);
    let run = |threads: usize, kind: ModelKind| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let engine = PathEngine::new(&g, 2).unwrap();
            let cache = SourceCache::build(engine, None, None).unwrap();
            let data = TrainingData {
                graph: &g,
                cache: &cache,
                weights: None,
                known: &known,
                valid: &valid,
            };
            let cfg = TrainConfig {
                model: kind,
                max_length: 2,
                max_iterations: 60,
                eval_every: 10,
                seed: 3,
                ..Default::default()
            };
            let rels: Vec<u32> = (0..g.num_relations() as u32).collect();
            train_relations(&data, &rels, &cfg)
                .into_iter()
                .map(|(r, out)| (r, out.map(|o| o.model).ok()))
                .collect::<Vec<_>>()
        })
    };
    for kind in [ModelKind::Mp, ModelKind::Cm] {
        assert_eq!(run(1, kind), run(4, kind));
    }
}

#[test]
fn recovers_a_planted_chain_rule() {
    for seed in 0..3 {
        assert!(recovers_rule(seed), "seed {seed}");
    }
}
