//! Synthetic inputs shared by the benchmarks.

use pathmix_core::{KnowledgeGraph, Triple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random graph with roughly `edges` distinct base triples, inverses added.
pub fn random_graph(vertices: usize, relations: usize, edges: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples: Vec<Triple> = (0..edges)
        .map(|_| {
            Triple::new(
                rng.gen_range(0..vertices as u32),
                rng.gen_range(0..relations as u32),
                rng.gen_range(0..vertices as u32),
            )
        })
        .collect();
    triples.sort_unstable();
    triples.dedup();
    KnowledgeGraph::augment_inverses(&triples, vertices, relations).expect("valid by construction")
}

/// Uniform draws from `[lo, hi)`.
pub fn random_vector(len: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}
