//! Per-relation training: minibatch sampling, margin ranking loss and
//! projected Adagrad.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{mrr_of, rank_query};
use crate::kg::{KnowledgeGraph, KnownAnswers, RelationId, Triple, VertexId};
use crate::lnn::DEFAULT_ALPHA;
use crate::models::{CmModel, ModelKind, MpModel, PathScorer, RelationModel};
use crate::paths::{EdgeMask, EdgeWeights, PathCountTable, PathVocabulary, SourceCache};

pub const ADAGRAD_EPS: f64 = 1e-10;
pub const NEGATIVE_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub max_length: usize,
    pub step_size: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Iterations between validation evaluations.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Mp,
            max_length: 3,
            step_size: 1e-4,
            margin: 1.0,
            batch_size: 8,
            max_iterations: 2000,
            eval_every: 20,
            patience: 10,
            seed: 0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step size must be positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.max_length == 0 {
            return bad("max length must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0.5, 1]");
        }
        Ok(())
    }
}

/// Seed of the generator owned by one relation's training task.
pub fn relation_seed(seed: u64, relation: RelationId) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = seed ^ (relation as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Adagrad accumulators for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adagrad {
    pub accumulators: Vec<f64>,
}

impl Adagrad {
    pub fn new(num_params: usize) -> Self {
        Self {
            accumulators: vec![0.0; num_params],
        }
    }

    /// `acc += g^2; p -= eta * g / sqrt(acc + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], eta: f64) -> Result<()> {
        if params.len() != grads.len() || grads.len() != self.accumulators.len() {
            return Err(Error::Dimension {
                expected: self.accumulators.len(),
                actual: grads.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i} is {}", grads[i])));
        }
        for ((p, g), a) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            if *g != 0.0 {
                *a += g * g;
                *p -= eta * g / (*a + ADAGRAD_EPS).sqrt();
            }
        }
        Ok(())
    }
}

/// One optimizer step followed by projection onto the feasible set.
pub fn optimizer_step<M: PathScorer>(model: &mut M, opt: &mut Adagrad, grads: &[f64], eta: f64) -> Result<()> {
    let mut params = model.params();
    opt.step(&mut params, grads, eta)?;
    model.set_params(&params)?;
    model.project()
}

/// Draws `b` positives of `relation` uniformly with replacement and `b`
/// non-edges by corrupting the tail of random positives; after
/// [`NEGATIVE_ATTEMPTS`] failures a negative falls back to uniform pairs.
pub fn sample_batch<R: Rng>(
    graph: &KnowledgeGraph,
    relation: RelationId,
    b: usize,
    rng: &mut R,
) -> Result<(Vec<Triple>, Vec<Triple>)> {
    let pool = graph.edges_with_relation(relation);
    if pool.is_empty() {
        return Err(Error::NoPositives(relation));
    }
    let n = graph.num_vertices() as VertexId;
    let positives: Vec<Triple> = (0..b).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    let mut negatives = Vec::with_capacity(b);
    'outer: for _ in 0..b {
        for _ in 0..NEGATIVE_ATTEMPTS {
            let base = pool[rng.gen_range(0..pool.len())];
            let cand = Triple::new(base.head, relation, rng.gen_range(0..n));
            if !graph.contains(&cand) {
                negatives.push(cand);
                continue 'outer;
            }
        }
        let cap = NEGATIVE_ATTEMPTS * (n as usize).max(1);
        for _ in 0..cap {
            let cand = Triple::new(rng.gen_range(0..n), relation, rng.gen_range(0..n));
            if !graph.contains(&cand) {
                negatives.push(cand);
                continue 'outer;
            }
        }
        return Err(Error::SamplingSaturated {
            relation,
            attempts: NEGATIVE_ATTEMPTS + cap,
        });
    }
    Ok((positives, negatives))
}

/// Hinge loss summed over all positive/negative pairs, with its gradient.
/// A pair contributes gradient only when its hinge is strictly positive.
pub fn batch_loss<M: PathScorer>(
    model: &M,
    positives: &[&M::Features],
    negatives: &[&M::Features],
    margin: f64,
) -> (f64, Vec<f64>) {
    let sp: Vec<f64> = positives.iter().map(|f| model.score(f)).collect();
    let sn: Vec<f64> = negatives.iter().map(|f| model.score(f)).collect();
    let mut loss = 0.0;
    let mut up_pos = vec![0.0; sp.len()];
    let mut up_neg = vec![0.0; sn.len()];
    for (i, p) in sp.iter().enumerate() {
        for (j, q) in sn.iter().enumerate() {
            let h = q - p + margin;
            if h > 0.0 {
                loss += h;
                up_pos[i] -= 1.0;
                up_neg[j] += 1.0;
            }
        }
    }
    let mut grad = vec![0.0; model.num_params()];
    for (f, u) in positives.iter().zip(&up_pos) {
        if *u != 0.0 {
            model.accumulate_gradient(f, *u, &mut grad);
        }
    }
    for (f, u) in negatives.iter().zip(&up_neg) {
        if *u != 0.0 {
            model.accumulate_gradient(f, *u, &mut grad);
        }
    }
    (loss, grad)
}

/// Shared read-only inputs of a training run.
pub struct TrainingData<'a> {
    pub graph: &'a KnowledgeGraph,
    /// Mask-free rows: counts, or masses when `weights` is set.
    pub cache: &'a SourceCache<'a>,
    pub weights: Option<&'a EdgeWeights>,
    pub known: &'a KnownAnswers,
    /// Base-direction validation triples.
    pub valid: &'a [Triple],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub iteration: usize,
    pub loss: f64,
    pub valid_mrr: Option<f64>,
    pub wall_seconds: f64,
}

pub fn write_log_csv<W: Write>(mut out: W, rows: &[LogRow]) -> Result<()> {
    let io = |e| Error::io("<training log>", e);
    writeln!(out, "iteration,loss,valid_mrr,wall_seconds").map_err(io)?;
    for r in rows {
        let mrr = r.valid_mrr.map(|m| format!("{m:.6}")).unwrap_or_default();
        writeln!(out, "{},{:.6},{},{:.3}", r.iteration, r.loss, mrr, r.wall_seconds).map_err(io)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RelationModel,
    pub log: Vec<LogRow>,
    pub best_valid_mrr: Option<f64>,
    pub iterations: usize,
}

fn validation_queries(data: &TrainingData<'_>, relation: RelationId) -> Vec<(VertexId, VertexId)> {
    let base = data.graph.num_base_relations() as RelationId;
    data.valid
        .iter()
        .filter_map(|t| {
            if t.relation == relation {
                Some((t.head, t.tail))
            } else if t.relation + base == relation {
                Some((t.tail, t.head))
            } else {
                None
            }
        })
        .collect()
}

fn validation_mrr<M: PathScorer>(
    model: &M,
    data: &TrainingData<'_>,
    relation: RelationId,
    queries: &[(VertexId, VertexId)],
) -> f64 {
    let n = data.graph.num_vertices();
    let values = model.id_values(data.cache.index());
    let mut scores = vec![0.0; n];
    let mut total = 0.0;
    for &(h, t) in queries {
        scores.iter_mut().for_each(|s| *s = 0.0);
        for (v, row) in data.cache.get(h).iter() {
            scores[v as usize] = row.dot(&values);
        }
        let (rank_n, m) = rank_query(&scores, t, data.known.tails(h, relation), n);
        total += mrr_of(rank_n, m);
    }
    total / queries.len() as f64
}

fn positive_tables(data: &TrainingData<'_>, relation: RelationId, max_len: usize) -> Result<(Vec<Triple>, Vec<PathCountTable>)> {
    let engine = data.cache.engine();
    if engine.max_length() != max_len {
        return Err(Error::InvalidArgument(format!(
            "path cache has max length {} but training asks for {max_len}",
            engine.max_length()
        )));
    }
    let positives = data.graph.edges_with_relation(relation).to_vec();
    let tables = positives
        .par_iter()
        .map(|t| engine.pair_table(t.head, t.tail, &EdgeMask::for_triple(data.graph, t), data.weights))
        .collect::<Result<Vec<_>>>()?;
    Ok((positives, tables))
}

fn run_loop<M: PathScorer + Clone + Sync>(
    mut model: M,
    data: &TrainingData<'_>,
    relation: RelationId,
    config: &TrainConfig,
    positives: &[Triple],
    tables: &[PathCountTable],
) -> Result<(M, Vec<LogRow>, Option<f64>, usize)> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(relation_seed(config.seed, relation));
    let index: rustc_hash::FxHashMap<Triple, usize> =
        positives.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let features: Vec<M::Features> = tables.par_iter().map(|t| model.featurize_table(t)).collect();
    let queries = validation_queries(data, relation);
    let mut opt = Adagrad::new(model.num_params());
    let mut log = Vec::new();

    let mut best = None;
    let mut best_model = model.clone();
    let mut since_best = 0;
    if !queries.is_empty() {
        let mrr = validation_mrr(&model, data, relation, &queries);
        log.push(LogRow {
            iteration: 0,
            loss: f64::NAN,
            valid_mrr: Some(mrr),
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        best = Some(mrr);
    }
    let mut done = 0;
    for it in 1..=config.max_iterations {
        let (pos, neg) = sample_batch(data.graph, relation, config.batch_size, &mut rng)?;
        let neg_features: Vec<M::Features> = neg
            .iter()
            .map(|t| match data.cache.get(t.head).get(t.tail) {
                Some(row) => model.featurize_row(row, data.cache.index()),
                None => model.featurize_table(&PathCountTable::new()),
            })
            .collect();
        let pos_refs: Vec<&M::Features> = pos.iter().map(|t| &features[index[t]]).collect();
        let neg_refs: Vec<&M::Features> = neg_features.iter().collect();
        let (loss, grad) = batch_loss(&model, &pos_refs, &neg_refs, config.margin);
        optimizer_step(&mut model, &mut opt, &grad, config.step_size)?;
        done = it;
        let evaluate = !queries.is_empty() && it % config.eval_every == 0;
        let valid_mrr = evaluate.then(|| validation_mrr(&model, data, relation, &queries));
        log.push(LogRow {
            iteration: it,
            loss,
            valid_mrr,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(mrr) = valid_mrr {
            if best.is_none_or(|b| mrr > b) {
                best = Some(mrr);
                best_model = model.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
        }
    }
    if queries.is_empty() {
        best_model = model;
    }
    Ok((best_model, log, best, done))
}

/// Trains the model for one relation of the augmented relation set.
///
/// Positives are scored with the query edge and its inverse removed; the
/// returned model is the one with the best validation MRR seen (or the last
/// one when the relation has no validation queries).
pub fn train_relation(data: &TrainingData<'_>, relation: RelationId, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if config.model.uses_embeddings() != data.weights.is_some() {
        return Err(Error::InvalidArgument(format!(
            "model kind {} {} edge weights",
            config.model,
            if data.weights.is_some() { "does not take" } else { "requires" }
        )));
    }
    if data.graph.edges_with_relation(relation).is_empty() {
        return Err(Error::NoPositives(relation));
    }
    let (positives, tables) = positive_tables(data, relation, config.max_length)?;
    let nr = data.graph.num_relations();
    let (model, log, best, iterations) = match config.model {
        ModelKind::Cm => {
            let m = CmModel::new(relation, nr, config.max_length, config.alpha)?;
            let (m, log, best, it) = run_loop(m, data, relation, config, &positives, &tables)?;
            (RelationModel::Cm(m), log, best, it)
        }
        ModelKind::Mp | ModelKind::MpKge => {
            let codec = data.cache.engine().codec().clone();
            let vocab = PathVocabulary::from_codes(&codec, tables.iter().flat_map(|t| t.iter().map(|e| e.0)));
            if vocab.is_empty() {
                log::warn!("relation {relation}: no positive is connected by another path; weights stay uniform");
                // a single dummy path keeps the simplex non-empty
                let fallback = PathVocabulary::from_codes(&codec, [codec.encode(&[relation])?]);
                let m = MpModel::new(relation, codec, fallback, config.model == ModelKind::MpKge)?;
                (RelationModel::Mp(m), Vec::new(), None, 0)
            } else {
                let m = MpModel::new(relation, codec, vocab, config.model == ModelKind::MpKge)?;
                let (m, log, best, it) = run_loop(m, data, relation, config, &positives, &tables)?;
                (RelationModel::Mp(m), log, best, it)
            }
        }
    };
    Ok(TrainOutcome {
        model,
        log,
        best_valid_mrr: best,
        iterations,
    })
}

/// Trains the given relations in parallel. Relations without positives are
/// reported as [`Error::NoPositives`] in their slot.
pub fn train_relations(
    data: &TrainingData<'_>,
    relations: &[RelationId],
    config: &TrainConfig,
) -> Vec<(RelationId, Result<TrainOutcome>)> {
    relations
        .par_iter()
        .map(|&r| (r, train_relation(data, r, config)))
        .collect()
}
