//! Filtered, tie-aware ranking metrics.
//!
//! A target that ties with `m - 1` other candidates below `n` strictly better
//! ones occupies every rank `n + 1 ..= n + m` with equal probability, so its
//! reciprocal rank and Hits@K are averaged over that block. Ties use exact
//! floating-point equality.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnownAnswers, RelationId, Triple, VertexId, Vocabularies};
use crate::models::RelationModel;
use crate::paths::SourceCache;

/// Outcome of ranking one query's target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueryResult {
    pub head: VertexId,
    pub relation: RelationId,
    pub target: VertexId,
    /// Candidates scoring strictly higher than the target.
    pub n: usize,
    /// Candidates (target included) scoring exactly the target's score.
    pub m: usize,
}

impl QueryResult {
    pub fn mrr(&self) -> f64 {
        mrr_of(self.n, self.m)
    }

    pub fn hits(&self, k: usize) -> f64 {
        hits_at_k(self.n, self.m, k)
    }
}

/// Ranks `target` among all vertices except `filtered_out`. `scores` is
/// indexed by vertex; missing trailing entries count as score 0.
pub fn rank_query(scores: &[f64], target: VertexId, filtered_out: &[VertexId], num_vertices: usize) -> (usize, usize) {
    let dedup;
    let filtered_out = if filtered_out.windows(2).all(|w| w[0] < w[1]) {
        filtered_out
    } else {
        let mut v = filtered_out.to_vec();
        v.sort_unstable();
        v.dedup();
        dedup = v;
        &dedup
    };
    let score = |v: usize| scores.get(v).copied().unwrap_or(0.0);
    let t = score(target as usize);
    let (mut n, mut m) = (0usize, 0usize);
    for v in 0..num_vertices {
        let s = score(v);
        if s > t {
            n += 1;
        } else if s == t {
            m += 1;
        }
    }
    for &f in filtered_out {
        if f == target || f as usize >= num_vertices {
            continue;
        }
        let s = score(f as usize);
        if s > t {
            n -= 1;
        } else if s == t {
            m -= 1;
        }
    }
    (n, m)
}

/// `(1/m) * sum_{r = n+1}^{n+m} 1/r`.
pub fn mrr_of(n: usize, m: usize) -> f64 {
    assert!(m >= 1, "tie block contains at least the target");
    (n + 1..=n + m).map(|r| 1.0 / r as f64).sum::<f64>() / m as f64
}

/// Fraction of the tie block's ranks that are at most `k`.
pub fn hits_at_k(n: usize, m: usize, k: usize) -> f64 {
    assert!(m >= 1, "tie block contains at least the target");
    k.saturating_sub(n).min(m) as f64 / m as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    /// Every triple yields a tail query and an inverse (head) query.
    #[serde(rename = "with-inverses")]
    WithInverses,
    /// Only the original direction.
    #[serde(rename = "direct-only")]
    DirectOnly,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::WithInverses => "with-inverses",
            EvalMode::DirectOnly => "direct-only",
        })
    }
}

/// `(head, relation, target)` queries for a set of base triples.
pub fn make_queries(triples: &[Triple], num_base_relations: usize, mode: EvalMode) -> Vec<Triple> {
    let base = num_base_relations as RelationId;
    let mut out = Vec::with_capacity(triples.len() * 2);
    for t in triples {
        out.push(*t);
        if mode == EvalMode::WithInverses {
            out.push(Triple::new(t.tail, t.relation + base, t.head));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

impl Metrics {
    fn from_results<'a>(results: impl Iterator<Item = &'a QueryResult>) -> Self {
        let mut acc = [0.0f64; 4];
        let mut count = 0;
        for r in results {
            acc[0] += r.mrr();
            acc[1] += r.hits(1);
            acc[2] += r.hits(3);
            acc[3] += r.hits(10);
            count += 1;
        }
        let div = count.max(1) as f64;
        Self {
            mrr: acc[0] / div,
            hits1: acc[1] / div,
            hits3: acc[2] / div,
            hits10: acc[3] / div,
            n_queries: count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
    pub mode: EvalMode,
    #[serde(skip)]
    pub results: Vec<QueryResult>,
}

impl RankingReport {
    pub fn from_results(results: Vec<QueryResult>, mode: EvalMode) -> Self {
        let m = Metrics::from_results(results.iter());
        Self {
            mrr: m.mrr,
            hits1: m.hits1,
            hits3: m.hits3,
            hits10: m.hits10,
            n_queries: m.n_queries,
            mode,
            results,
        }
    }

    /// Metrics per query relation, sorted by relation id.
    pub fn per_relation(&self) -> Vec<(RelationId, Metrics)> {
        let mut rels: Vec<RelationId> = self.results.iter().map(|r| r.relation).collect();
        rels.sort_unstable();
        rels.dedup();
        rels.into_iter()
            .map(|rel| {
                (
                    rel,
                    Metrics::from_results(self.results.iter().filter(|r| r.relation == rel)),
                )
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_relation_csv<W: Write>(&self, mut out: W, vocab: &Vocabularies) -> Result<()> {
        let io = |e| Error::io("<report>", e);
        writeln!(out, "relation,label,n_queries,mrr,hits1,hits3,hits10").map_err(io)?;
        for (rel, m) in self.per_relation() {
            let label = vocab.relation_label(rel).replace(',', ";");
            writeln!(
                out,
                "{rel},{label},{},{:.6},{:.6},{:.6},{:.6}",
                m.n_queries, m.mrr, m.hits1, m.hits3, m.hits10
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Ranks every query with scores from `score_fn(head, relation)` (indexed by
/// vertex; `None` means all zeros).
pub fn evaluate_with<F>(
    queries: &[Triple],
    num_vertices: usize,
    known: &KnownAnswers,
    mode: EvalMode,
    score_fn: F,
) -> Result<RankingReport>
where
    F: Fn(VertexId, RelationId) -> Option<Vec<f64>> + Sync,
{
    if queries.is_empty() {
        return Err(Error::EmptyInput("no evaluation queries".into()));
    }
    let results: Vec<QueryResult> = queries
        .par_iter()
        .map(|q| {
            let scores = score_fn(q.head, q.relation).unwrap_or_default();
            let (n, m) = rank_query(&scores, q.tail, known.tails(q.head, q.relation), num_vertices);
            QueryResult {
                head: q.head,
                relation: q.relation,
                target: q.tail,
                n,
                m,
            }
        })
        .collect();
    Ok(RankingReport::from_results(results, mode))
}

/// Scores of every vertex for `(head, relation)` under `model`, from
/// mask-free cached path rows. Unreachable vertices score 0.
pub fn model_scores(model: &RelationModel, cache: &SourceCache<'_>, head: VertexId) -> Vec<f64> {
    scores_from_values(&model.id_values(cache.index()), cache, head)
}

fn scores_from_values(values: &[f64], cache: &SourceCache<'_>, head: VertexId) -> Vec<f64> {
    let mut scores = vec![0.0; cache.engine().graph().num_vertices()];
    for (v, row) in cache.get(head).iter() {
        scores[v as usize] = row.dot(values);
    }
    scores
}

/// Evaluates per-relation models on base triples. `models` is indexed by
/// relation id over the augmented relation set.
pub fn evaluate_models(
    models: &[Option<RelationModel>],
    cache: &SourceCache<'_>,
    known: &KnownAnswers,
    triples: &[Triple],
    mode: EvalMode,
) -> Result<RankingReport> {
    let graph = cache.engine().graph();
    let queries = make_queries(triples, graph.num_base_relations(), mode);
    let mut missing: Vec<RelationId> = queries
        .iter()
        .map(|q| q.relation)
        .filter(|&r| models.get(r as usize).is_none_or(Option::is_none))
        .collect();
    missing.sort_unstable();
    missing.dedup();
    if !missing.is_empty() {
        log::warn!("no model for relations {missing:?}; their queries score all zeros");
    }
    let values: Vec<Option<Vec<f64>>> = models
        .par_iter()
        .map(|m| m.as_ref().map(|m| m.id_values(cache.index())))
        .collect();
    evaluate_with(&queries, graph.num_vertices(), known, mode, |h, r| {
        values
            .get(r as usize)
            .and_then(Option::as_ref)
            .map(|v| scores_from_values(v, cache, h))
    })
}
