//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use pathmix_core::lnn::project_simplex;
use pathmix_core::{
    CmModel, EdgeMask, KnowledgeGraph, MpModel, PathEngine, PathScorer, PathVocabulary, PredicateParams, RelationId,
    Triple, VertexId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random base triples; every vertex id below `vertices` is valid.
pub fn random_triples(rng: &mut impl Rng, vertices: usize, relations: usize, edges: usize) -> Vec<Triple> {
    let mut t: Vec<Triple> = (0..edges)
        .map(|_| {
            Triple::new(
                rng.gen_range(0..vertices as u32),
                rng.gen_range(0..relations as u32),
                rng.gen_range(0..vertices as u32),
            )
        })
        .collect();
    t.sort_unstable();
    t.dedup();
    t
}

/// Small random augmented graph: at most 12 vertices, 4 base relations.
pub fn small_graph(seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = rng.gen_range(2..=12);
    let r = rng.gen_range(1..=4);
    let e = rng.gen_range(1..=3 * v);
    let t = random_triples(&mut rng, v, r, e);
    KnowledgeGraph::augment_inverses(&t, v, r).unwrap()
}

/// `(count, summed walk score)` per `(source, destination, relation path)`,
/// by exhaustive depth-first walk enumeration over the augmented edges.
pub type WalkTable = BTreeMap<(VertexId, VertexId, Vec<RelationId>), (f64, f64)>;

pub fn enumerate_walks(
    graph: &KnowledgeGraph,
    max_len: usize,
    mask: &EdgeMask,
    score: &dyn Fn(&Triple) -> f64,
) -> WalkTable {
    #[allow(clippy::too_many_arguments)]
    fn go(
        graph: &KnowledgeGraph,
        src: VertexId,
        at: VertexId,
        rels: &mut Vec<RelationId>,
        mass: f64,
        max_len: usize,
        mask: &EdgeMask,
        score: &dyn Fn(&Triple) -> f64,
        out: &mut WalkTable,
    ) {
        if rels.len() == max_len {
            return;
        }
        // adjacency read straight from the edge list, not the graph's index
        for e in graph.edges().iter().filter(|e| e.head == at) {
            if mask.contains(e.head, e.relation, e.tail) {
                continue;
            }
            rels.push(e.relation);
            let m = mass + score(e);
            let slot = out.entry((src, e.tail, rels.clone())).or_insert((0.0, 0.0));
            slot.0 += 1.0;
            slot.1 += m;
            go(graph, src, e.tail, rels, m, max_len, mask, score, out);
            rels.pop();
        }
    }
    let mut out = WalkTable::new();
    for u in 0..graph.num_vertices() as VertexId {
        go(graph, u, u, &mut Vec::new(), 0.0, max_len, mask, score, &mut out);
    }
    out
}

/// Deterministic, distinct-ish edge score in (0, 1).
pub fn toy_score(t: &Triple) -> f64 {
    let h = (t.head as u64 * 7919 + t.relation as u64 * 104_729 + t.tail as u64 * 1_299_709) % 997;
    (h as f64 + 1.0) / 999.0
}

/// Central finite difference of `f` along coordinate `i` of `x`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

/// Mean of `1/rank` and of `[rank <= k]` over every ordering of the tie
/// block: the target is equally likely to sit at each block position.
pub fn brute_force_tie_metrics(n: usize, m: usize, k: usize) -> (f64, f64) {
    fn perms(items: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
        if start == items.len() {
            out.push(items.clone());
            return;
        }
        for i in start..items.len() {
            items.swap(start, i);
            perms(items, start + 1, out);
            items.swap(start, i);
        }
    }
    let mut all = Vec::new();
    // item 0 is the target
    perms(&mut (0..m).collect(), 0, &mut all);
    let (mut rr, mut hits) = (0.0, 0.0);
    for p in &all {
        let pos = p.iter().position(|&x| x == 0).unwrap();
        let rank = n + pos + 1;
        rr += 1.0 / rank as f64;
        if rank <= k {
            hits += 1.0;
        }
    }
    (rr / all.len() as f64, hits / all.len() as f64)
}

/// Integer adjacency matrix of one relation.
pub fn adjacency(graph: &KnowledgeGraph, relation: RelationId) -> Vec<Vec<u64>> {
    let n = graph.num_vertices();
    let mut a = vec![vec![0u64; n]; n];
    for e in graph.edges().iter().filter(|e| e.relation == relation) {
        a[e.head as usize][e.tail as usize] += 1;
    }
    a
}

pub fn matmul(a: &[Vec<u64>], b: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let n = a.len();
    let mut c = vec![vec![0u64; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Grand sum of `A_{r1} A_{r2} ... A_{rl}`.
pub fn chain_sum(graph: &KnowledgeGraph, path: &[RelationId]) -> u64 {
    let mut acc = adjacency(graph, path[0]);
    for &r in &path[1..] {
        acc = matmul(&acc, &adjacency(graph, r));
    }
    acc.iter().flatten().sum()
}

/// Relations of [`rule_graph`].
pub const RULE_P: RelationId = 0;
pub const RULE_Q: RelationId = 1;
pub const RULE_HEAD: RelationId = 2;

/// Graph where `head(x, z)` holds exactly when some `p(x, y) ^ q(y, z)`
/// exists, plus two unrelated random relations.
pub fn rule_graph(seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 40u32;
    let mut triples = Vec::new();
    for rel in [RULE_P, RULE_Q, 3, 4] {
        for _ in 0..45 {
            triples.push(Triple::new(rng.gen_range(0..n), rel, rng.gen_range(0..n)));
        }
    }
    let p: Vec<Triple> = triples.iter().copied().filter(|t| t.relation == RULE_P).collect();
    let q: Vec<Triple> = triples.iter().copied().filter(|t| t.relation == RULE_Q).collect();
    for a in &p {
        for b in q.iter().filter(|b| b.head == a.tail) {
            triples.push(Triple::new(a.head, RULE_HEAD, b.tail));
        }
    }
    triples.sort_unstable();
    triples.dedup();
    KnowledgeGraph::augment_inverses(&triples, n as usize, 5).unwrap()
}

/// Trains a mixture-of-paths model for `RULE_HEAD` on [`rule_graph`] and
/// reports whether its heaviest path is `(p, q)`.
pub fn recovers_rule(seed: u64) -> bool {
    use pathmix_core::{KnownAnswers, PathEngine, RelationModel, SourceCache, TrainConfig, TrainingData};
    let g = rule_graph(seed);
    let engine = PathEngine::new(&g, 2).unwrap();
    let cache = SourceCache::build(engine, None, None).unwrap();
    let base = g.num_base_relations();
    let known = KnownAnswers::new(base, g.edges().iter().filter(|t| (t.relation as usize) < base));
    let data = TrainingData {
        graph: &g,
        cache: &cache,
        weights: None,
        known: &known,
        valid: &[],
    };
    // no validation split here, so a fixed budget with a larger step
    let cfg = TrainConfig {
        max_length: 2,
        step_size: 1e-2,
        max_iterations: 300,
        seed,
        ..Default::default()
    };
    let out = pathmix_core::training::train_relation(&data, RULE_HEAD, &cfg).unwrap();
    let RelationModel::Mp(m) = out.model else { unreachable!() };
    let best = m
        .weights()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i as u32)
        .unwrap();
    m.vocabulary().path(m.codec(), best).relations() == [RULE_P, RULE_Q]
}

/// CM with sparse hop weights (projection of a spread-out vector) so that
/// some conjunctions land strictly inside (0, 1).
pub fn random_cm(graph: &KnowledgeGraph, max_len: usize, seed: u64) -> CmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nr = graph.num_relations();
    let mut m = CmModel::new(0, nr, max_len, 0.7).unwrap();
    let mut p = m.params();
    for x in p.iter_mut() {
        *x = rng.gen_range(0.0..3.0);
    }
    m.set_params(&p).unwrap();
    m.project().unwrap();
    m
}

pub fn random_mp(graph: &KnowledgeGraph, engine: &PathEngine, seed: u64, weighted: bool) -> MpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let walks = enumerate_walks(graph, engine.max_length(), &EdgeMask::none(), &|_| 0.0);
    let mut paths: Vec<Vec<u32>> = walks.keys().map(|k| k.2.clone()).collect();
    paths.sort();
    paths.dedup();
    // leave some observed paths out of the vocabulary
    paths.retain(|_| rng.gen_bool(0.7));
    if paths.is_empty() {
        paths.push(vec![0]);
    }
    let vocab = PathVocabulary::from_paths(engine.codec(), &paths).unwrap();
    let raw: Vec<f64> = (0..vocab.len()).map(|_| rng.gen_range(-1.0..2.0)).collect();
    let pred = PredicateParams {
        weights: project_simplex(&raw).unwrap(),
    };
    MpModel::with_weights(0, engine.codec().clone(), vocab, pred, weighted).unwrap()
}

/// True when every path in `features` has a conjunction pre-activation at
/// least `gap` away from the clip points 0 and 1.
pub fn cm_interior(m: &CmModel, features: &[(u64, f64)], gap: f64) -> bool {
    let codec = m.codec();
    features.iter().all(|&(code, _)| {
        let path = codec.decode(code);
        let sub = &m.sub_models[path.len() - 1];
        let x: Vec<f64> = path.iter().zip(&sub.hops).map(|(&r, h)| h.weights[r as usize]).collect();
        let z = sub.conj.pre_activation(&x).unwrap();
        z.abs() > gap && (z - 1.0).abs() > gap
    })
}
