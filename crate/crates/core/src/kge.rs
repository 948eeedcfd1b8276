//! Knowledge graph embeddings used to score individual edges and paths.
//!
//! Two families are supported. The similarity family is a trilinear product
//! with separate head-role and tail-role entity vectors, squashed by a
//! logistic. The distance family is a translation `h + r ~ t` whose distance
//! is turned into a similarity by `tanh(margin - d)`.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, RelationId, Triple, VertexId};
use crate::paths::EdgeWeights;

pub const DEFAULT_MARGIN: f64 = 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgeFamily {
    Similarity,
    Distance,
}

impl fmt::Display for KgeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KgeFamily::Similarity => "similarity",
            KgeFamily::Distance => "distance",
        })
    }
}

impl FromStr for KgeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(KgeFamily::Similarity),
            "distance" => Ok(KgeFamily::Distance),
            other => Err(Error::InvalidArgument(format!("unknown embedding family {other:?}"))),
        }
    }
}

/// Row-major embedding matrices. `tail` is empty for the distance family,
/// which uses `head` as its single entity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    family: KgeFamily,
    dim: usize,
    margin: Option<f64>,
    num_entities: usize,
    num_relations: usize,
    head: Vec<f64>,
    tail: Vec<f64>,
    relation: Vec<f64>,
}

impl EmbeddingTable {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        family: KgeFamily,
        dim: usize,
        margin: Option<f64>,
        num_entities: usize,
        num_relations: usize,
        head: Vec<f64>,
        tail: Vec<f64>,
        relation: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let expect = |what: &str, v: &[f64], rows: usize| -> Result<()> {
            if v.len() != rows * dim {
                return Err(Error::EmbeddingFormat {
                    message: format!("{what} matrix has {} values, expected {}", v.len(), rows * dim),
                    offset: 0,
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{what} embeddings")));
            }
            Ok(())
        };
        expect("entity", &head, num_entities)?;
        expect("relation", &relation, num_relations)?;
        let margin = match family {
            KgeFamily::Similarity => {
                expect("tail entity", &tail, num_entities)?;
                None
            }
            KgeFamily::Distance => {
                if !tail.is_empty() {
                    return Err(Error::InvalidArgument(
                        "distance family has a single entity matrix".into(),
                    ));
                }
                let m = margin.unwrap_or(DEFAULT_MARGIN);
                if !(m > 0.0 && m.is_finite()) {
                    return Err(Error::InvalidArgument(format!("margin must be positive, got {m}")));
                }
                Some(m)
            }
        };
        Ok(Self {
            family,
            dim,
            margin,
            num_entities,
            num_relations,
            head,
            tail,
            relation,
        })
    }

    pub fn family(&self) -> KgeFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn margin(&self) -> Option<f64> {
        self.margin
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    fn row(m: &[f64], dim: usize, i: usize) -> &[f64] {
        &m[i * dim..(i + 1) * dim]
    }

    fn check(&self, t: &Triple) -> Result<()> {
        for (kind, id, size) in [
            ("entity", t.head, self.num_entities),
            ("entity", t.tail, self.num_entities),
            ("relation", t.relation, self.num_relations),
        ] {
            if id as usize >= size {
                return Err(Error::MissingEmbedding { kind, id: id as usize });
            }
        }
        Ok(())
    }

    /// Raw trilinear product (similarity) or translation distance (distance).
    pub fn raw(&self, t: &Triple) -> Result<f64> {
        self.check(t)?;
        Ok(self.raw_unchecked(t.head, t.relation, t.tail))
    }

    fn raw_unchecked(&self, h: VertexId, r: RelationId, t: VertexId) -> f64 {
        let d = self.dim;
        let hv = Self::row(&self.head, d, h as usize);
        let rv = Self::row(&self.relation, d, r as usize);
        match self.family {
            KgeFamily::Similarity => {
                let tv = Self::row(&self.tail, d, t as usize);
                hv.iter().zip(rv).zip(tv).map(|((a, b), c)| a * b * c).sum()
            }
            KgeFamily::Distance => {
                let tv = Self::row(&self.head, d, t as usize);
                hv.iter()
                    .zip(rv)
                    .zip(tv)
                    .map(|((a, b), c)| (a + b - c).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    /// Logistic of the similarity, or `tanh(margin - distance)`.
    pub fn edge_score(&self, t: &Triple) -> Result<f64> {
        let raw = self.raw(t)?;
        Ok(match self.family {
            KgeFamily::Similarity => 1.0 / (1.0 + (-raw).exp()),
            KgeFamily::Distance => (self.margin.expect("distance family has a margin") - raw).tanh(),
        })
    }

    /// Sum of edge scores along a chained walk.
    pub fn path_score(&self, path: &[Triple]) -> Result<f64> {
        if path.is_empty() {
            return Err(Error::InvalidArgument("cannot score an empty path".into()));
        }
        for pair in path.windows(2) {
            if pair[0].tail != pair[1].head {
                return Err(Error::InvalidArgument(format!(
                    "path is not chained: edge ends at {} but the next starts at {}",
                    pair[0].tail, pair[1].head
                )));
            }
        }
        path.iter().map(|t| self.edge_score(t)).sum()
    }

    /// Per-edge scores aligned with the graph's adjacency arrays.
    pub fn edge_weights(&self, graph: &KnowledgeGraph) -> Result<EdgeWeights> {
        EdgeWeights::build(graph, |t| self.edge_score(&t))
    }

    /// Scores of `(head, relation, v)` for every entity `v` (raw, before the
    /// squashing transform, which is monotone).
    pub fn tail_scores(&self, head: VertexId, relation: RelationId) -> Result<Vec<f64>> {
        self.check(&Triple::new(head, relation, 0))?;
        let d = self.dim;
        Ok(match self.family {
            KgeFamily::Similarity => {
                let hv = Self::row(&self.head, d, head as usize);
                let rv = Self::row(&self.relation, d, relation as usize);
                let q: Vec<f64> = hv.iter().zip(rv).map(|(a, b)| a * b).collect();
                (0..self.num_entities)
                    .map(|t| Self::row(&self.tail, d, t).iter().zip(&q).map(|(a, b)| a * b).sum())
                    .collect()
            }
            KgeFamily::Distance => (0..self.num_entities as VertexId)
                .map(|t| -self.raw_unchecked(head, relation, t))
                .collect(),
        })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<embeddings>", e);
        let margin = match self.margin {
            Some(m) => m.to_string(),
            None => "none".into(),
        };
        writeln!(
            out,
            "KGE v1 {} entities={} relations={} dim={} margin={}",
            self.family, self.num_entities, self.num_relations, self.dim, margin
        )
        .map_err(io)?;
        let mut emit = |tag: &str, m: &[f64], rows: usize| -> std::io::Result<()> {
            for i in 0..rows {
                write!(out, "{tag} {i}")?;
                for v in Self::row(m, self.dim, i) {
                    write!(out, " {v}")?;
                }
                writeln!(out)?;
            }
            Ok(())
        };
        match self.family {
            KgeFamily::Similarity => {
                emit("E_HEAD", &self.head, self.num_entities).map_err(io)?;
                emit("E_TAIL", &self.tail, self.num_entities).map_err(io)?;
            }
            KgeFamily::Distance => emit("E", &self.head, self.num_entities).map_err(io)?,
        }
        emit("R", &self.relation, self.num_relations).map_err(io)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the text format; errors carry the byte offset of the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let err = |offset: usize, message: String| Error::EmbeddingFormat { message, offset };
        let header_end = text.find('\n').unwrap_or(text.len());
        let header: Vec<&str> = text[..header_end].split_whitespace().collect();
        if header.len() < 6 || header[0] != "KGE" || header[1] != "v1" {
            return Err(err(0, "expected header \"KGE v1 {family} entities=.. relations=.. dim=..\"".into()));
        }
        let family: KgeFamily = header[2].parse().map_err(|_| err(0, format!("unknown family {:?}", header[2])))?;
        let field = |name: &str| -> Option<&str> {
            header[3..]
                .iter()
                .find_map(|kv| kv.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
        };
        let count = |name: &str| -> Result<usize> {
            field(name)
                .ok_or_else(|| err(0, format!("header lacks {name}=")))?
                .parse()
                .map_err(|_| err(0, format!("bad {name}= value")))
        };
        let n = count("entities")?;
        let m = count("relations")?;
        let dim = count("dim")?;
        if dim == 0 {
            return Err(err(0, "dim must be positive".into()));
        }
        let margin = match field("margin") {
            None | Some("none") => {
                if family == KgeFamily::Distance {
                    log::warn!("embedding file has no margin; using {DEFAULT_MARGIN}");
                }
                None
            }
            Some(v) => Some(v.parse::<f64>().map_err(|_| err(0, format!("bad margin {v:?}")))?),
        };

        let mut head = vec![f64::NAN; n * dim];
        let mut tail = match family {
            KgeFamily::Similarity => vec![f64::NAN; n * dim],
            KgeFamily::Distance => Vec::new(),
        };
        let mut relation = vec![f64::NAN; m * dim];
        let mut seen_head = vec![false; n];
        let mut seen_tail = vec![false; if family == KgeFamily::Similarity { n } else { 0 }];
        let mut seen_rel = vec![false; m];

        let mut offset = (header_end + 1).min(text.len());
        for line in text[offset..].split_inclusive('\n') {
            let at = offset;
            offset += line.len();
            let mut parts = line.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            let (matrix, seen, rows) = match (tag, family) {
                ("E_HEAD", KgeFamily::Similarity) | ("E", KgeFamily::Distance) => (&mut head, &mut seen_head, n),
                ("E_TAIL", KgeFamily::Similarity) => (&mut tail, &mut seen_tail, n),
                ("R", _) => (&mut relation, &mut seen_rel, m),
                _ => return Err(err(at, format!("unexpected tag {tag:?} for {family} family"))),
            };
            let id: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(at, "missing or malformed id".into()))?;
            if id >= rows {
                return Err(err(at, format!("{tag} id {id} out of range ({rows})")));
            }
            if seen[id] {
                return Err(err(at, format!("duplicate {tag} {id}")));
            }
            seen[id] = true;
            let row = &mut matrix[id * dim..(id + 1) * dim];
            let mut k = 0;
            for tok in parts {
                if k == dim {
                    return Err(err(at, format!("{tag} {id} has more than {dim} values")));
                }
                let v: f64 = tok.parse().map_err(|_| err(at, format!("bad number {tok:?}")))?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{tag} {id} at byte {at}")));
                }
                row[k] = v;
                k += 1;
            }
            if k != dim {
                return Err(err(at, format!("{tag} {id} has {k} values, expected {dim}")));
            }
        }
        let missing = seen_head
            .iter()
            .chain(&seen_tail)
            .chain(&seen_rel)
            .filter(|s| !**s)
            .count();
        if missing > 0 {
            return Err(err(text.len(), format!("payload truncated: {missing} vectors missing")));
        }
        Self::new(family, dim, margin, n, m, head, tail, relation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTrainConfig {
    pub family: KgeFamily,
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    /// Weight of the cubic penalty on the factors of each positive
    /// (similarity family only).
    pub regularization: f64,
    pub margin: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for EmbeddingTrainConfig {
    fn default() -> Self {
        Self {
            family: KgeFamily::Similarity,
            dim: 256,
            epochs: 60,
            learning_rate: 0.1,
            negatives: 64,
            regularization: 5e-3,
            margin: DEFAULT_MARGIN,
            init_scale: 1e-1,
            seed: 0,
        }
    }
}

struct Adagrad {
    acc: Vec<f64>,
}

impl Adagrad {
    fn step(&mut self, params: &mut [f64], offset: usize, grad: &[f64], lr: f64) {
        for (k, g) in grad.iter().enumerate() {
            let a = &mut self.acc[offset + k];
            *a += g * g;
            params[offset + k] -= lr * g / (a.sqrt() + 1e-10);
        }
    }
}

/// Trains embeddings on every edge of `graph` (inverse edges included, each
/// inverse relation with its own vector). Each positive is contrasted with
/// `negatives` uniformly corrupted tails under a softmax cross-entropy.
pub fn train_embeddings(graph: &KnowledgeGraph, config: &EmbeddingTrainConfig) -> Result<EmbeddingTable> {
    let n = graph.num_vertices();
    let m = graph.num_relations();
    let d = config.dim;
    if d == 0 || config.epochs == 0 || config.negatives == 0 {
        return Err(Error::InvalidArgument("dim, epochs and negatives must be positive".into()));
    }
    if config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    if graph.num_edges() == 0 {
        return Err(Error::EmptyInput("graph has no edges to embed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut init = |rows: usize| -> Vec<f64> {
        (0..rows * d)
            .map(|_| config.init_scale * (rng.gen::<f64>() * 2.0 - 1.0))
            .collect()
    };
    let similarity = config.family == KgeFamily::Similarity;
    let mut head = init(n);
    let mut tail = if similarity { init(n) } else { Vec::new() };
    let mut rel = init(m);
    let mut opt_head = Adagrad { acc: vec![0.0; head.len()] };
    let mut opt_tail = Adagrad { acc: vec![0.0; tail.len()] };
    let mut opt_rel = Adagrad { acc: vec![0.0; rel.len()] };

    let edges = graph.edges();
    let mut order: Vec<usize> = (0..edges.len()).collect();
    let k = config.negatives;
    let mut cand: Vec<VertexId> = Vec::with_capacity(k + 1);
    let mut scores = vec![0.0; k + 1];
    let (mut gh, mut gr) = (vec![0.0; d], vec![0.0; d]);
    let mut gt = vec![vec![0.0; d]; k + 1];

    for epoch in 0..config.epochs {
        // Fisher-Yates with the seeded generator
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut total = 0.0;
        for &e in &order {
            let t = edges[e];
            let (h, r) = (t.head as usize, t.relation as usize);
            cand.clear();
            cand.push(t.tail);
            for _ in 0..k {
                cand.push(rng.gen_range(0..n as VertexId));
            }
            let hv = &head[h * d..(h + 1) * d];
            let rv = &rel[r * d..(r + 1) * d];
            for (j, &c) in cand.iter().enumerate() {
                let c = c as usize;
                scores[j] = if similarity {
                    let tv = &tail[c * d..(c + 1) * d];
                    (0..d).map(|i| hv[i] * rv[i] * tv[i]).sum()
                } else {
                    let tv = &head[c * d..(c + 1) * d];
                    config.margin - (0..d).map(|i| (hv[i] + rv[i] - tv[i]).powi(2)).sum::<f64>().sqrt()
                };
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            let loss = -(scores[0] - max) + z.ln();
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "embedding loss diverged at epoch {epoch} on edge {e}"
                )));
            }
            total += loss;
            gh.iter_mut().for_each(|g| *g = 0.0);
            gr.iter_mut().for_each(|g| *g = 0.0);
            for (j, &c) in cand.iter().enumerate() {
                let coef = (scores[j] - max).exp() / z - if j == 0 { 1.0 } else { 0.0 };
                let c = c as usize;
                let gtj = &mut gt[j];
                if similarity {
                    let tv = &tail[c * d..(c + 1) * d];
                    for i in 0..d {
                        gh[i] += coef * rv[i] * tv[i];
                        gr[i] += coef * hv[i] * tv[i];
                        gtj[i] = coef * hv[i] * rv[i];
                    }
                } else {
                    let tv = &head[c * d..(c + 1) * d];
                    let dist = (0..d).map(|i| (hv[i] + rv[i] - tv[i]).powi(2)).sum::<f64>().sqrt().max(1e-12);
                    // score = margin - dist; d score / d diff = -diff / dist
                    for i in 0..d {
                        let g = -coef * (hv[i] + rv[i] - tv[i]) / dist;
                        gh[i] += g;
                        gr[i] += g;
                        gtj[i] = -g;
                    }
                }
            }
            if similarity && config.regularization > 0.0 {
                let lam = config.regularization;
                let tv = &tail[t.tail as usize * d..(t.tail as usize + 1) * d];
                for i in 0..d {
                    gh[i] += 3.0 * lam * hv[i].abs() * hv[i];
                    gr[i] += 3.0 * lam * rv[i].abs() * rv[i];
                    gt[0][i] += 3.0 * lam * tv[i].abs() * tv[i];
                }
            }
            let lr = config.learning_rate;
            opt_head.step(&mut head, h * d, &gh, lr);
            opt_rel.step(&mut rel, r * d, &gr, lr);
            for (j, &c) in cand.iter().enumerate() {
                let c = c as usize;
                if similarity {
                    opt_tail.step(&mut tail, c * d, &gt[j], lr);
                } else {
                    opt_head.step(&mut head, c * d, &gt[j], lr);
                }
            }
        }
        log::debug!("embedding epoch {epoch}: mean loss {:.5}", total / edges.len() as f64);
    }
    let margin = (!similarity).then_some(config.margin);
    EmbeddingTable::new(config.family, d, margin, n, m, head, tail, rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sim_table() -> EmbeddingTable {
        // entity 0: head (1,0), tail (1,1); entity 1: head (0,1), tail (1,1)
        EmbeddingTable::new(
            KgeFamily::Similarity,
            2,
            None,
            2,
            1,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![2.0, 3.0],
        )
        .unwrap()
    }

    #[test]
    fn similarity_hand_value() {
        let t = sim_table();
        let s = t.edge_score(&Triple::new(0, 0, 1)).unwrap();
        assert_abs_diff_eq!(s, 1.0 / (1.0 + (-2.0f64).exp()), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.8808, epsilon = 1e-4);
    }

    #[test]
    fn zero_similarity_is_half() {
        let t = EmbeddingTable::new(KgeFamily::Similarity, 1, None, 1, 1, vec![0.0], vec![1.0], vec![1.0]).unwrap();
        assert_eq!(t.edge_score(&Triple::new(0, 0, 0)).unwrap(), 0.5);
    }

    #[test]
    fn distance_at_margin_is_zero() {
        // h + r - t = (3, 4) has norm 5
        let t = EmbeddingTable::new(
            KgeFamily::Distance,
            2,
            Some(5.0),
            2,
            1,
            vec![0.0, 0.0, -3.0, -4.0],
            vec![],
            vec![0.0, 0.0],
        )
        .unwrap();
        assert_abs_diff_eq!(t.edge_score(&Triple::new(0, 0, 1)).unwrap(), 0.0, epsilon = 1e-15);
        let path = [Triple::new(0, 0, 1), Triple::new(1, 0, 0)];
        assert_abs_diff_eq!(t.path_score(&path).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn missing_id_is_named() {
        let t = sim_table();
        assert!(matches!(
            t.edge_score(&Triple::new(0, 0, 7)),
            Err(Error::MissingEmbedding { kind: "entity", id: 7 })
        ));
        assert!(matches!(
            t.edge_score(&Triple::new(0, 3, 1)),
            Err(Error::MissingEmbedding { kind: "relation", id: 3 })
        ));
    }

    #[test]
    fn path_score_checks_chaining() {
        let t = sim_table();
        let e = t.edge_score(&Triple::new(0, 0, 1)).unwrap();
        assert_eq!(t.path_score(&[Triple::new(0, 0, 1)]).unwrap(), e);
        assert!(t.path_score(&[]).is_err());
        assert!(t.path_score(&[Triple::new(0, 0, 1), Triple::new(0, 0, 1)]).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut t = sim_table();
        t.head[0] = 0.1 + 0.2;
        t.relation[1] = -1e-300;
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = EmbeddingTable::parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let text = "KGE v1 similarity entities=2 relations=1 dim=2 margin=none\nE_HEAD 0 1 0\nE_HEAD 1 0\n";
        match EmbeddingTable::parse(text) {
            Err(Error::EmbeddingFormat { offset, .. }) => assert_eq!(offset, text.find("E_HEAD 1").unwrap()),
            other => panic!("unexpected {other:?}"),
        }
        let text = "KGE v1 similarity entities=2 relations=1 dim=2 margin=none\nE_HEAD 0 1 0\n";
        match EmbeddingTable::parse(text) {
            Err(Error::EmbeddingFormat { offset, .. }) => assert_eq!(offset, text.len()),
            other => panic!("unexpected {other:?}"),
        }
        assert!(EmbeddingTable::parse("KGE v1 rotation entities=1 relations=1 dim=1\n").is_err());
    }

    #[test]
    fn distance_margin_defaults() {
        let text = "KGE v1 distance entities=1 relations=1 dim=1\nE 0 0.5\nR 0 0.5\n";
        let t = EmbeddingTable::parse(text).unwrap();
        assert_eq!(t.margin(), Some(DEFAULT_MARGIN));
    }

    #[test]
    fn one_triple_graph_fits() {
        let g = KnowledgeGraph::augment_inverses(&[Triple::new(0, 0, 1)], 4, 1).unwrap();
        let cfg = EmbeddingTrainConfig {
            dim: 8,
            epochs: 200,
            negatives: 4,
            ..Default::default()
        };
        let t = train_embeddings(&g, &cfg).unwrap();
        let pos = t.raw(&Triple::new(0, 0, 1)).unwrap();
        for v in [0, 2, 3] {
            assert!(pos > t.raw(&Triple::new(0, 0, v)).unwrap());
        }
        assert_eq!(train_embeddings(&g, &cfg).unwrap(), t);
    }
}
