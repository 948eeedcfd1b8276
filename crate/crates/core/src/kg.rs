//! Knowledge graph ingestion, vocabularies, inverse augmentation and
//! adjacency indexes.

use std::collections::hash_map::Entry;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = u32;
pub type RelationId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: VertexId,
    pub relation: RelationId,
    pub tail: VertexId,
}

impl Triple {
    pub const fn new(head: VertexId, relation: RelationId, tail: VertexId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Dense id <-> label mapping. Ids are assigned in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    index: FxHashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert(&mut self, label: &str) -> u32 {
        match self.index.entry(label.to_owned()) {
            Entry::Occupied(e) => *e.get(),
            Entry::Vacant(e) => {
                let id = self.labels.len() as u32;
                self.labels.push(label.to_owned());
                e.insert(id);
                id
            }
        }
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Entity and (base) relation vocabularies shared by all splits.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabularies {
    pub entities: Vocab,
    pub relations: Vocab,
}

impl Vocabularies {
    /// Label of a relation in the augmented space. Inverse relations are
    /// rendered as `label^-1`.
    pub fn relation_label(&self, relation: RelationId) -> String {
        let base = self.relations.len() as u32;
        if relation < base {
            self.relations.label(relation).unwrap_or("?").to_owned()
        } else {
            format!(
                "{}^-1",
                self.relations.label(relation - base).unwrap_or("?")
            )
        }
    }
}

/// Parses tab-separated `head<TAB>relation<TAB>tail` lines, extending the
/// vocabularies in first-seen order. Blank lines are skipped; line order is
/// preserved.
pub fn parse_triples<R: BufRead>(
    reader: R,
    source_name: &str,
    vocab: &mut Vocabularies,
) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                source_name: source_name.to_owned(),
                line: idx + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let head = vocab.entities.get_or_insert(fields[0]);
        let relation = vocab.relations.get_or_insert(fields[1]);
        let tail = vocab.entities.get_or_insert(fields[2]);
        triples.push(Triple::new(head, relation, tail));
    }
    if triples.is_empty() {
        return Err(Error::EmptyInput(source_name.to_owned()));
    }
    Ok(triples)
}

/// Loads a triple file. See [`parse_triples`].
pub fn load_triples(path: impl AsRef<Path>, vocab: &mut Vocabularies) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_triples(BufReader::new(file), &path.display().to_string(), vocab)
}

pub fn write_triples<W: Write>(mut out: W, triples: &[Triple], vocab: &Vocabularies) -> Result<()> {
    fn label<'v>(v: &'v Vocab, id: u32, what: &'static str) -> Result<&'v str> {
        v.label(id).ok_or(Error::OutOfRange {
            what,
            id: id as usize,
            size: v.len(),
        })
    }
    for t in triples {
        writeln!(
            out,
            "{}\t{}\t{}",
            label(&vocab.entities, t.head, "entity")?,
            label(&vocab.relations, t.relation, "relation")?,
            label(&vocab.entities, t.tail, "entity")?
        )
        .map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

fn dedup_in_order(triples: Vec<Triple>) -> (Vec<Triple>, usize) {
    let mut seen = FxHashSet::default();
    let before = triples.len();
    let kept: Vec<Triple> = triples.into_iter().filter(|t| seen.insert(*t)).collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Train/valid/test triples over shared vocabularies.
#[derive(Clone, Debug)]
pub struct DatasetSplits {
    pub vocab: Vocabularies,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    /// Duplicate lines dropped while loading, summed over splits.
    pub duplicates_dropped: usize,
}

impl DatasetSplits {
    /// Loads `train.txt`, `valid.txt` and `test.txt` from a dataset directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::load_files(
            dir.join("train.txt"),
            dir.join("valid.txt"),
            dir.join("test.txt"),
        )
    }

    pub fn load_files(
        train: impl AsRef<Path>,
        valid: impl AsRef<Path>,
        test: impl AsRef<Path>,
    ) -> Result<Self> {
        let mut vocab = Vocabularies::default();
        let train = load_triples(train, &mut vocab)?;
        let valid = load_triples(valid, &mut vocab)?;
        let test = load_triples(test, &mut vocab)?;
        Self::from_triples(vocab, train, valid, test)
    }

    /// Builds splits from already-parsed triples, dropping duplicates within
    /// each split and rejecting triples shared between splits.
    pub fn from_triples(
        vocab: Vocabularies,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let (train, d1) = dedup_in_order(train);
        let (valid, d2) = dedup_in_order(valid);
        let (test, d3) = dedup_in_order(test);
        let duplicates_dropped = d1 + d2 + d3;
        if duplicates_dropped > 0 {
            log::warn!("dropped {duplicates_dropped} duplicate triples");
        }
        let train_set: FxHashSet<Triple> = train.iter().copied().collect();
        let valid_set: FxHashSet<Triple> = valid.iter().copied().collect();
        let overlap = valid.iter().filter(|t| train_set.contains(t)).count()
            + test
                .iter()
                .filter(|t| train_set.contains(t) || valid_set.contains(t))
                .count();
        if overlap > 0 {
            return Err(Error::InvalidArgument(format!(
                "splits are not disjoint: {overlap} shared triples"
            )));
        }
        Ok(Self {
            vocab,
            train,
            valid,
            test,
            duplicates_dropped,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.entities.len()
    }

    pub fn num_base_relations(&self) -> usize {
        self.vocab.relations.len()
    }

    /// Graph over the training split with inverse relations added.
    pub fn train_graph(&self) -> Result<KnowledgeGraph> {
        KnowledgeGraph::augment_inverses(
            &self.train,
            self.num_entities(),
            self.num_base_relations(),
        )
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Conventional dataset layout under a directory.
pub fn split_paths(dir: impl AsRef<Path>) -> [PathBuf; 3] {
    let dir = dir.as_ref();
    [
        dir.join("train.txt"),
        dir.join("valid.txt"),
        dir.join("test.txt"),
    ]
}

/// One adjacency entry: the relation label and the vertex at the other end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Adjacent {
    pub relation: RelationId,
    pub vertex: VertexId,
}

/// Immutable augmented graph. Relation `r < R` has inverse `r + R`.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    num_vertices: usize,
    num_base_relations: usize,
    edges: Vec<Triple>,
    edge_set: FxHashSet<Triple>,
    out_offsets: Vec<usize>,
    out_adj: Vec<Adjacent>,
    in_offsets: Vec<usize>,
    in_adj: Vec<Adjacent>,
    by_relation: Vec<Vec<Triple>>,
}

impl KnowledgeGraph {
    /// Adds `<t, r^-1, h>` for every `<h, r, t>` and builds both adjacency
    /// indexes. Duplicate inputs collapse since the edge set is a set.
    pub fn augment_inverses(
        triples: &[Triple],
        num_vertices: usize,
        num_base_relations: usize,
    ) -> Result<Self> {
        let base = num_base_relations as u32;
        for t in triples {
            if t.relation >= base {
                return Err(Error::OutOfRange {
                    what: "relation",
                    id: t.relation as usize,
                    size: num_base_relations,
                });
            }
            for v in [t.head, t.tail] {
                if v as usize >= num_vertices {
                    return Err(Error::OutOfRange {
                        what: "vertex",
                        id: v as usize,
                        size: num_vertices,
                    });
                }
            }
        }
        let mut edge_set = FxHashSet::default();
        let mut edges = Vec::with_capacity(triples.len() * 2);
        for t in triples {
            let inv = Triple::new(t.tail, t.relation + base, t.head);
            for e in [*t, inv] {
                if edge_set.insert(e) {
                    edges.push(e);
                }
            }
        }
        Ok(Self::from_edges(
            edges,
            edge_set,
            num_vertices,
            num_base_relations,
        ))
    }

    fn from_edges(
        edges: Vec<Triple>,
        edge_set: FxHashSet<Triple>,
        num_vertices: usize,
        num_base_relations: usize,
    ) -> Self {
        let build = |key: fn(&Triple) -> (VertexId, Adjacent)| {
            let mut pairs: Vec<(VertexId, Adjacent)> = edges.iter().map(key).collect();
            pairs.sort_unstable();
            let mut offsets = vec![0usize; num_vertices + 1];
            for (v, _) in &pairs {
                offsets[*v as usize + 1] += 1;
            }
            for i in 0..num_vertices {
                offsets[i + 1] += offsets[i];
            }
            (offsets, pairs.into_iter().map(|(_, a)| a).collect::<Vec<_>>())
        };
        let (out_offsets, out_adj) = build(|t| {
            (
                t.head,
                Adjacent {
                    relation: t.relation,
                    vertex: t.tail,
                },
            )
        });
        let (in_offsets, in_adj) = build(|t| {
            (
                t.tail,
                Adjacent {
                    relation: t.relation,
                    vertex: t.head,
                },
            )
        });
        let mut by_relation = vec![Vec::new(); 2 * num_base_relations];
        for e in &edges {
            by_relation[e.relation as usize].push(*e);
        }
        Self {
            num_vertices,
            num_base_relations,
            edges,
            edge_set,
            out_offsets,
            out_adj,
            in_offsets,
            in_adj,
            by_relation,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    /// |R+|, including inverses.
    pub fn num_relations(&self) -> usize {
        2 * self.num_base_relations
    }

    pub fn num_base_relations(&self) -> usize {
        self.num_base_relations
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Triple] {
        &self.edges
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.edge_set.contains(triple)
    }

    pub fn inverse_relation(&self, relation: RelationId) -> RelationId {
        let base = self.num_base_relations as u32;
        if relation < base {
            relation + base
        } else {
            relation - base
        }
    }

    pub fn is_inverse(&self, relation: RelationId) -> bool {
        relation as usize >= self.num_base_relations
    }

    pub fn inverse_triple(&self, t: &Triple) -> Triple {
        Triple::new(t.tail, self.inverse_relation(t.relation), t.head)
    }

    /// Outgoing `(relation, tail)` pairs, sorted.
    pub fn out_edges(&self, v: VertexId) -> &[Adjacent] {
        let v = v as usize;
        &self.out_adj[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    /// Incoming `(relation, head)` pairs, sorted.
    pub fn in_edges(&self, v: VertexId) -> &[Adjacent] {
        let v = v as usize;
        &self.in_adj[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    /// Position of `v`'s first outgoing edge in the flat out-adjacency array.
    pub(crate) fn out_offset(&self, v: VertexId) -> usize {
        self.out_offsets[v as usize]
    }

    pub(crate) fn in_offset(&self, v: VertexId) -> usize {
        self.in_offsets[v as usize]
    }

    /// Edges labelled with `relation` (in the augmented space).
    pub fn edges_with_relation(&self, relation: RelationId) -> &[Triple] {
        self.by_relation
            .get(relation as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Index of every known triple (all splits, both directions) used for
/// filtered ranking.
#[derive(Clone, Debug, Default)]
pub struct KnownAnswers {
    num_base_relations: u32,
    tails: FxHashMap<(VertexId, RelationId), Vec<VertexId>>,
}

impl KnownAnswers {
    pub fn new<'a>(num_base_relations: usize, triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let base = num_base_relations as u32;
        let mut tails: FxHashMap<(VertexId, RelationId), Vec<VertexId>> = FxHashMap::default();
        for t in triples {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
            tails
                .entry((t.tail, t.relation + base))
                .or_default()
                .push(t.head);
        }
        for v in tails.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Self {
            num_base_relations: base,
            tails,
        }
    }

    pub fn from_splits(splits: &DatasetSplits) -> Self {
        Self::new(splits.num_base_relations(), splits.all_triples())
    }

    /// Known tails for `(head, relation)`; relation may be an inverse.
    pub fn tails(&self, head: VertexId, relation: RelationId) -> &[VertexId] {
        self.tails
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Vertices removed from the candidate pool of query `(head, relation, ?)`
    /// answered by `target`: every other known tail.
    pub fn filtered_out(
        &self,
        head: VertexId,
        relation: RelationId,
        target: VertexId,
    ) -> impl Iterator<Item = VertexId> + '_ {
        self.tails(head, relation)
            .iter()
            .copied()
            .filter(move |&t| t != target)
    }

    /// Candidate destinations: all vertices minus other known tails.
    pub fn filter_candidates(
        &self,
        head: VertexId,
        relation: RelationId,
        target: VertexId,
        num_vertices: usize,
    ) -> Vec<VertexId> {
        let removed = self.tails(head, relation);
        (0..num_vertices as u32)
            .filter(|v| *v == target || removed.binary_search(v).is_err())
            .collect()
    }

    pub fn num_base_relations(&self) -> usize {
        self.num_base_relations as usize
    }
}
