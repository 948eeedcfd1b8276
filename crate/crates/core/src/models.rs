//! Triple scorers over relation-path statistics and rule extraction.
//!
//! Both models score a pair `(u, v)` for one relation from the table of
//! relation paths connecting them. CM (chain of mixtures) puts a mixture over
//! relations at every hop and combines the hops with a weighted conjunction;
//! MP (mixture of paths) puts a single mixture over whole relation paths.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{RelationId, Vocabularies};
use crate::lnn::{alpha_lower_bound, ConjunctionParams, PredicateParams};
use crate::paths::{PathCode, PathCodec, PathCountTable, PathIndex, PathRow, PathVocabulary, RelationPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "cm")]
    Cm,
    #[serde(rename = "mp")]
    Mp,
    #[serde(rename = "mp-kge")]
    MpKge,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cm => "cm",
            ModelKind::Mp => "mp",
            ModelKind::MpKge => "mp-kge",
        }
    }

    pub fn uses_embeddings(self) -> bool {
        self == ModelKind::MpKge
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cm" => Ok(ModelKind::Cm),
            "mp" => Ok(ModelKind::Mp),
            "mp-kge" => Ok(ModelKind::MpKge),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind {other:?} (expected cm, mp or mp-kge)"
            ))),
        }
    }
}

/// Alpha actually used for an `arity`-ary conjunction. A requested alpha at or
/// below `arity / (arity + 1)` admits no feasible parameters, so it is raised
/// to the midpoint between that bound and 1.
pub fn effective_alpha(arity: usize, alpha: f64) -> f64 {
    let bound = alpha_lower_bound(arity);
    if alpha > bound {
        alpha
    } else {
        (2 * arity + 1) as f64 / (2 * arity + 2) as f64
    }
}

/// Common interface of the trainable scorers. Parameters are exposed as a
/// flat vector so one optimizer serves both models.
pub trait PathScorer {
    /// Per-example representation precomputed from a path table.
    type Features: Send + Sync;

    fn featurize_table(&self, table: &PathCountTable) -> Self::Features;
    fn featurize_row(&self, row: &PathRow, index: &PathIndex) -> Self::Features;
    fn score(&self, features: &Self::Features) -> f64;
    /// Adds `upstream * d score / d params` into `grad`.
    fn accumulate_gradient(&self, features: &Self::Features, upstream: f64, grad: &mut [f64]);
    fn num_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    /// Restores feasibility after an unconstrained step.
    fn project(&mut self) -> Result<()>;
    /// Largest constraint violation over all operators.
    fn max_violation(&self) -> f64;
    /// Contribution of one unit of each indexed path, so a cache row scores
    /// as `row.dot(&id_values)`.
    fn id_values(&self, index: &PathIndex) -> Vec<f64>;
}

/// CM component for rule bodies of one fixed length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmSubModel {
    pub hops: Vec<PredicateParams>,
    pub conj: ConjunctionParams,
}

impl CmSubModel {
    fn conj_value(&self, relations: &[RelationId]) -> f64 {
        let z = self.pre_activation(relations);
        z.clamp(0.0, 1.0)
    }

    fn pre_activation(&self, relations: &[RelationId]) -> f64 {
        let mut z = self.conj.beta;
        for ((hop, c), &r) in self.hops.iter().zip(&self.conj.weights).zip(relations) {
            z -= c * (1.0 - hop.weights[r as usize]);
        }
        z
    }

    /// True when no relation path can give a non-zero conjunction.
    fn is_dead(&self) -> bool {
        let best: Vec<f64> = self
            .hops
            .iter()
            .map(|h| h.weights.iter().copied().fold(0.0, f64::max))
            .collect();
        self.conj.forward(&best).map(|v| v <= 0.0).unwrap_or(false)
    }

    fn num_params(&self, num_relations: usize) -> usize {
        self.hops.len() * num_relations + 1 + self.conj.weights.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmModel {
    pub relation: RelationId,
    pub num_relations: usize,
    pub alpha: f64,
    /// `sub_models[l - 1]` scores bodies of length `l`.
    pub sub_models: Vec<CmSubModel>,
}

impl CmModel {
    pub fn new(relation: RelationId, num_relations: usize, max_length: usize, alpha: f64) -> Result<Self> {
        if max_length == 0 {
            return Err(Error::InvalidArgument("max_length must be at least 1".into()));
        }
        if relation as usize >= num_relations {
            return Err(Error::OutOfRange {
                what: "relation",
                id: relation as usize,
                size: num_relations,
            });
        }
        let sub_models = (1..=max_length)
            .map(|len| {
                Ok(CmSubModel {
                    hops: (0..len)
                        .map(|_| PredicateParams::uniform(num_relations))
                        .collect::<Result<_>>()?,
                    conj: ConjunctionParams::lukasiewicz(len, effective_alpha(len, alpha))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            relation,
            num_relations,
            alpha,
            sub_models,
        })
    }

    pub fn max_length(&self) -> usize {
        self.sub_models.len()
    }

    pub fn codec(&self) -> PathCodec {
        PathCodec::new(self.num_relations, self.max_length()).expect("validated at construction")
    }

    fn validate(&self) -> Result<()> {
        for (i, sub) in self.sub_models.iter().enumerate() {
            let len = i + 1;
            if sub.hops.len() != len || sub.conj.weights.len() != len {
                return Err(Error::Checkpoint(format!(
                    "CM sub-model {len} has {} hops and a {}-ary conjunction",
                    sub.hops.len(),
                    sub.conj.weights.len()
                )));
            }
            for hop in &sub.hops {
                if hop.weights.len() != self.num_relations {
                    return Err(Error::Dimension {
                        expected: self.num_relations,
                        actual: hop.weights.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Sum over relation paths of `count * conj(w1[r1], .., wl[rl])`.
    pub fn score_table(&self, table: &PathCountTable) -> Result<f64> {
        let codec = self.codec();
        let mut buf = Vec::with_capacity(self.max_length());
        let mut total = 0.0;
        for (code, count) in table.iter() {
            buf.clear();
            codec.decode_into(code, &mut buf);
            if buf.is_empty() || buf.len() > self.max_length() {
                return Err(Error::InvalidArgument(format!(
                    "path of length {} outside 1..={}",
                    buf.len(),
                    self.max_length()
                )));
            }
            if let Some(&bad) = buf.iter().find(|&&r| r as usize >= self.num_relations) {
                return Err(Error::OutOfRange {
                    what: "relation",
                    id: bad as usize,
                    size: self.num_relations,
                });
            }
            total += count * self.sub_models[buf.len() - 1].conj_value(&buf);
        }
        Ok(total)
    }

    fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.sub_models.len());
        let mut at = 0;
        for sub in &self.sub_models {
            out.push(at);
            at += sub.num_params(self.num_relations);
        }
        out
    }

    fn score_entries(&self, entries: impl Iterator<Item = (PathCode, f64)>) -> f64 {
        let codec = self.codec();
        let live: Vec<bool> = self.sub_models.iter().map(|s| !s.is_dead()).collect();
        let mut buf = Vec::with_capacity(self.max_length());
        let mut total = 0.0;
        for (code, count) in entries {
            let len = codec.length(code);
            if len == 0 || len > live.len() || !live[len - 1] {
                continue;
            }
            buf.clear();
            codec.decode_into(code, &mut buf);
            total += count * self.sub_models[len - 1].conj_value(&buf);
        }
        total
    }
}

impl PathScorer for CmModel {
    type Features = Vec<(PathCode, f64)>;

    fn featurize_table(&self, table: &PathCountTable) -> Self::Features {
        table.entries().to_vec()
    }

    fn featurize_row(&self, row: &PathRow, index: &PathIndex) -> Self::Features {
        row.iter().map(|(id, v)| (index.code(id), v)).collect()
    }

    fn score(&self, features: &Self::Features) -> f64 {
        self.score_entries(features.iter().copied())
    }

    fn accumulate_gradient(&self, features: &Self::Features, upstream: f64, grad: &mut [f64]) {
        let codec = self.codec();
        let offsets = self.offsets();
        let nr = self.num_relations;
        let mut buf = Vec::with_capacity(self.max_length());
        for &(code, count) in features {
            buf.clear();
            codec.decode_into(code, &mut buf);
            let len = buf.len();
            if len == 0 || len > self.max_length() {
                continue;
            }
            let sub = &self.sub_models[len - 1];
            let z = sub.pre_activation(&buf);
            if !(0.0..=1.0).contains(&z) {
                continue;
            }
            let g = count * upstream;
            let base = offsets[len - 1];
            let beta_at = base + len * nr;
            grad[beta_at] += g;
            for (i, &r) in buf.iter().enumerate() {
                let x = sub.hops[i].weights[r as usize];
                grad[base + i * nr + r as usize] += sub.conj.weights[i] * g;
                grad[beta_at + 1 + i] += -(1.0 - x) * g;
            }
        }
    }

    fn num_params(&self) -> usize {
        self.sub_models
            .iter()
            .map(|s| s.num_params(self.num_relations))
            .sum()
    }

    fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for sub in &self.sub_models {
            for hop in &sub.hops {
                out.extend_from_slice(&hop.weights);
            }
            out.push(sub.conj.beta);
            out.extend_from_slice(&sub.conj.weights);
        }
        out
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension {
                expected: self.num_params(),
                actual: params.len(),
            });
        }
        let nr = self.num_relations;
        let mut at = 0;
        for sub in &mut self.sub_models {
            for hop in &mut sub.hops {
                hop.weights.copy_from_slice(&params[at..at + nr]);
                at += nr;
            }
            sub.conj.beta = params[at];
            at += 1;
            let n = sub.conj.weights.len();
            sub.conj.weights.copy_from_slice(&params[at..at + n]);
            at += n;
        }
        Ok(())
    }

    fn project(&mut self) -> Result<()> {
        for sub in &mut self.sub_models {
            for hop in &mut sub.hops {
                hop.project()?;
            }
            sub.conj.project()?;
        }
        Ok(())
    }

    fn max_violation(&self) -> f64 {
        self.sub_models
            .iter()
            .flat_map(|s| {
                s.hops
                    .iter()
                    .map(PredicateParams::max_violation)
                    .chain(std::iter::once(s.conj.max_violation()))
            })
            .fold(0.0, f64::max)
    }

    fn id_values(&self, index: &PathIndex) -> Vec<f64> {
        index
            .codes()
            .iter()
            .map(|&c| self.score_entries(std::iter::once((c, 1.0))))
            .collect()
    }
}

/// Mixture over relation paths observed for one relation.
#[derive(Clone, Debug, PartialEq)]
pub struct MpModel {
    pub relation: RelationId,
    pub weighted: bool,
    codec: PathCodec,
    vocabulary: PathVocabulary,
    pub pred: PredicateParams,
}

impl MpModel {
    /// Uniform weights over `vocabulary`.
    pub fn new(relation: RelationId, codec: PathCodec, vocabulary: PathVocabulary, weighted: bool) -> Result<Self> {
        if vocabulary.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "relation {relation} has an empty path vocabulary"
            )));
        }
        let pred = PredicateParams::uniform(vocabulary.len())?;
        Self::with_weights(relation, codec, vocabulary, pred, weighted)
    }

    pub fn with_weights(
        relation: RelationId,
        codec: PathCodec,
        vocabulary: PathVocabulary,
        pred: PredicateParams,
        weighted: bool,
    ) -> Result<Self> {
        if pred.len() != vocabulary.len() {
            return Err(Error::Dimension {
                expected: vocabulary.len(),
                actual: pred.len(),
            });
        }
        Ok(Self {
            relation,
            weighted,
            codec,
            vocabulary,
            pred,
        })
    }

    pub fn kind(&self) -> ModelKind {
        if self.weighted {
            ModelKind::MpKge
        } else {
            ModelKind::Mp
        }
    }

    pub fn codec(&self) -> &PathCodec {
        &self.codec
    }

    pub fn vocabulary(&self) -> &PathVocabulary {
        &self.vocabulary
    }

    pub fn weights(&self) -> &[f64] {
        &self.pred.weights
    }

    /// Sparse dot product of path counts (or masses) with the path weights.
    /// Paths outside the vocabulary contribute nothing.
    pub fn score_table(&self, table: &PathCountTable) -> f64 {
        table
            .iter()
            .filter_map(|(code, v)| self.vocabulary.id(code).map(|id| v * self.pred.weights[id as usize]))
            .sum()
    }

    /// Number of entries of `table` whose path is outside the vocabulary.
    pub fn unknown_paths(&self, table: &PathCountTable) -> usize {
        table
            .iter()
            .filter(|(code, _)| self.vocabulary.id(*code).is_none())
            .count()
    }

    fn featurize(&self, entries: impl Iterator<Item = (PathCode, f64)>) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = entries
            .filter_map(|(code, v)| self.vocabulary.id(code).map(|id| (id, v)))
            .collect();
        out.sort_unstable_by_key(|e| e.0);
        out
    }
}

impl PathScorer for MpModel {
    type Features = Vec<(u32, f64)>;

    fn featurize_table(&self, table: &PathCountTable) -> Self::Features {
        self.featurize(table.iter())
    }

    fn featurize_row(&self, row: &PathRow, index: &PathIndex) -> Self::Features {
        self.featurize(row.iter().map(|(id, v)| (index.code(id), v)))
    }

    fn score(&self, features: &Self::Features) -> f64 {
        features
            .iter()
            .map(|&(id, v)| v * self.pred.weights[id as usize])
            .sum()
    }

    fn accumulate_gradient(&self, features: &Self::Features, upstream: f64, grad: &mut [f64]) {
        for &(id, v) in features {
            grad[id as usize] += v * upstream;
        }
    }

    fn num_params(&self) -> usize {
        self.pred.len()
    }

    fn params(&self) -> Vec<f64> {
        self.pred.weights.clone()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.pred.len() {
            return Err(Error::Dimension {
                expected: self.pred.len(),
                actual: params.len(),
            });
        }
        self.pred.weights.copy_from_slice(params);
        Ok(())
    }

    fn project(&mut self) -> Result<()> {
        self.pred.project()?;
        Ok(())
    }

    fn max_violation(&self) -> f64 {
        self.pred.max_violation()
    }

    fn id_values(&self, index: &PathIndex) -> Vec<f64> {
        let mut out = vec![0.0; index.len()];
        for (&code, &w) in self.vocabulary.codes().iter().zip(&self.pred.weights) {
            if let Some(id) = index.id(code) {
                out[id as usize] = w;
            }
        }
        out
    }
}

/// A trained relation model of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum RelationModel {
    Cm(CmModel),
    Mp(MpModel),
}

impl RelationModel {
    pub fn relation(&self) -> RelationId {
        match self {
            RelationModel::Cm(m) => m.relation,
            RelationModel::Mp(m) => m.relation,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            RelationModel::Cm(_) => ModelKind::Cm,
            RelationModel::Mp(m) => m.kind(),
        }
    }

    pub fn max_length(&self) -> usize {
        match self {
            RelationModel::Cm(m) => m.max_length(),
            RelationModel::Mp(m) => m.codec.max_length(),
        }
    }

    pub fn num_relations(&self) -> usize {
        match self {
            RelationModel::Cm(m) => m.num_relations,
            RelationModel::Mp(m) => m.codec.num_relations(),
        }
    }

    pub fn id_values(&self, index: &PathIndex) -> Vec<f64> {
        match self {
            RelationModel::Cm(m) => m.id_values(index),
            RelationModel::Mp(m) => m.id_values(index),
        }
    }

    pub fn score_table(&self, table: &PathCountTable) -> Result<f64> {
        match self {
            RelationModel::Cm(m) => m.score_table(table),
            RelationModel::Mp(m) => Ok(m.score_table(table)),
        }
    }

    pub fn max_violation(&self) -> f64 {
        match self {
            RelationModel::Cm(m) => m.max_violation(),
            RelationModel::Mp(m) => m.max_violation(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = match self {
            RelationModel::Cm(m) => Checkpoint::Cm(m.clone()),
            RelationModel::Mp(m) => {
                let body = MpCheckpoint {
                    relation: m.relation,
                    num_relations: m.codec.num_relations(),
                    max_length: m.codec.max_length(),
                    paths: (0..m.vocabulary.len() as u32)
                        .map(|id| m.vocabulary.path(&m.codec, id).relations().to_vec())
                        .collect(),
                    weights: m.pred.weights.clone(),
                };
                if m.weighted {
                    Checkpoint::MpKge(body)
                } else {
                    Checkpoint::Mp(body)
                }
            }
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        match ck {
            Checkpoint::Cm(m) => {
                m.validate()?;
                if m.relation as usize >= m.num_relations {
                    return Err(Error::Checkpoint(format!(
                        "relation {} outside {} relations",
                        m.relation, m.num_relations
                    )));
                }
                Ok(RelationModel::Cm(m))
            }
            Checkpoint::Mp(b) => Ok(RelationModel::Mp(b.into_model(false)?)),
            Checkpoint::MpKge(b) => Ok(RelationModel::Mp(b.into_model(true)?)),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum Checkpoint {
    #[serde(rename = "cm")]
    Cm(CmModel),
    #[serde(rename = "mp")]
    Mp(MpCheckpoint),
    #[serde(rename = "mp-kge")]
    MpKge(MpCheckpoint),
}

#[derive(Serialize, Deserialize)]
struct MpCheckpoint {
    relation: RelationId,
    num_relations: usize,
    max_length: usize,
    paths: Vec<Vec<RelationId>>,
    weights: Vec<f64>,
}

impl MpCheckpoint {
    fn into_model(self, weighted: bool) -> Result<MpModel> {
        let codec = PathCodec::new(self.num_relations, self.max_length)?;
        let vocabulary = PathVocabulary::from_paths(&codec, &self.paths)?;
        let in_order = vocabulary.len() == self.paths.len()
            && self
                .paths
                .iter()
                .enumerate()
                .all(|(i, p)| vocabulary.path(&codec, i as u32).relations() == p.as_slice());
        if !in_order {
            return Err(Error::Checkpoint(
                "path vocabulary must be duplicate-free and lexicographically sorted".into(),
            ));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("checkpoint weights".into()));
        }
        MpModel::with_weights(
            self.relation,
            codec,
            vocabulary,
            PredicateParams {
                weights: self.weights,
            },
            weighted,
        )
    }
}

/// A weighted chain rule `head(X0, Xm) <- body`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub head: RelationId,
    pub body: RelationPath,
    pub weight: f64,
    pub path_id: u32,
    pub recursive: bool,
}

impl Rule {
    /// Renders with inverse relations as base relations with swapped arguments.
    pub fn render(&self, vocab: &Vocabularies) -> String {
        let base = vocab.relations.len() as RelationId;
        let atom = |r: RelationId, a: String, b: String| -> String {
            if r >= base {
                let name = vocab.relations.label(r - base).unwrap_or("?");
                format!("{name}({b},{a})")
            } else {
                let name = vocab.relations.label(r).unwrap_or("?");
                format!("{name}({a},{b})")
            }
        };
        let m = self.body.len();
        let head = atom(self.head, "X0".into(), format!("X{m}"));
        let body: Vec<String> = self
            .body
            .relations()
            .iter()
            .enumerate()
            .map(|(i, &r)| atom(r, format!("X{i}"), format!("X{}", i + 1)))
            .collect();
        format!("{head} <- {} # weight={:.6}", body.join(" ^ "), self.weight)
    }
}

/// The `top_k` heaviest paths of an MP model as rules, ties broken by
/// ascending vocabulary id.
pub fn extract_rules(model: &MpModel, num_base_relations: usize, top_k: usize) -> Result<Vec<Rule>> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be positive".into()));
    }
    let base = num_base_relations as RelationId;
    let same_predicate = |a: RelationId, b: RelationId| a % base == b % base;
    let mut order: Vec<u32> = (0..model.vocabulary.len() as u32).collect();
    order.sort_by(|&a, &b| {
        model.pred.weights[b as usize]
            .total_cmp(&model.pred.weights[a as usize])
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .take(top_k)
        .map(|id| {
            let body = model.vocabulary.path(&model.codec, id);
            let recursive = body.relations().iter().any(|&r| same_predicate(r, model.relation));
            Rule {
                head: model.relation,
                body,
                weight: model.pred.weights[id as usize],
                path_id: id,
                recursive,
            }
        })
        .collect())
}

pub fn write_rules_text<W: Write>(mut out: W, rules: &[Rule], vocab: &Vocabularies) -> Result<()> {
    for r in rules {
        writeln!(out, "{}", r.render(vocab)).map_err(|e| Error::io("<rules>", e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RuleJson<'a> {
    head: &'a str,
    path_id: u32,
    body: Vec<String>,
    relation_ids: &'a [RelationId],
    weight: f64,
    recursive: bool,
    text: String,
}

pub fn rules_to_json(rules: &[Rule], vocab: &Vocabularies) -> Result<String> {
    let head_labels: Vec<String> = rules.iter().map(|r| vocab.relation_label(r.head)).collect();
    let items: Vec<RuleJson<'_>> = rules
        .iter()
        .zip(&head_labels)
        .map(|(r, head)| RuleJson {
            head,
            path_id: r.path_id,
            body: r.body.relations().iter().map(|&b| vocab.relation_label(b)).collect(),
            relation_ids: r.body.relations(),
            weight: r.weight,
            recursive: r.recursive,
            text: r.render(vocab),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&items)?)
}
