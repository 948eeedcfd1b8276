use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use pathmix_core::eval::{evaluate_models, EvalMode};
use pathmix_core::kge::train_embeddings;
use pathmix_core::models::{extract_rules, rules_to_json, write_rules_text};
use pathmix_core::paths::{path_count_matrix, reachability_fraction, write_reachability_csv, DEFAULT_MATRIX_CAP};
use pathmix_core::training::{train_relations, write_log_csv};
use pathmix_core::{
    DatasetSplits, EdgeWeights, EmbeddingTable, EmbeddingTrainConfig, Error, KnowledgeGraph, KnownAnswers,
    ModelKind, PathEngine, RelationId, RelationModel, SourceCache, TrainingData,
};
use serde::{Deserialize, Serialize};

use crate::config::{usage, RunConfig};

pub const VERSION: &str = env!("PATHMIX_BUILD");
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub relations: Vec<RelationSummary>,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RelationSummary {
    pub relation: RelationId,
    pub label: String,
    pub iterations: usize,
    pub best_valid_mrr: Option<f64>,
    pub checkpoint: PathBuf,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_splits(dir: &Path) -> anyhow::Result<(DatasetSplits, KnowledgeGraph)> {
    let splits = DatasetSplits::load(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    let graph = splits.train_graph()?;
    log::info!(
        "{}: {} entities, {} relations, {} train / {} valid / {} test triples",
        dir.display(),
        splits.num_entities(),
        splits.num_base_relations(),
        splits.train.len(),
        splits.valid.len(),
        splits.test.len()
    );
    Ok((splits, graph))
}

fn load_weights(path: &Path, graph: &KnowledgeGraph) -> anyhow::Result<EdgeWeights> {
    let table = EmbeddingTable::load(path).with_context(|| format!("loading embeddings {}", path.display()))?;
    Ok(table.edge_weights(graph)?)
}

fn checkpoint_name(relation: RelationId) -> PathBuf {
    PathBuf::from("models").join(format!("relation_{relation:03}.json"))
}

pub fn train(config: &RunConfig) -> anyhow::Result<()> {
    config.validate()?;
    let start = Instant::now();
    let data_dir = config.data.as_ref().expect("validated");
    let (splits, graph) = load_splits(data_dir)?;
    let relations: Vec<RelationId> = if config.relations.is_empty() {
        (0..graph.num_relations() as RelationId).collect()
    } else {
        config.relations.clone()
    };
    if let Some(&bad) = relations.iter().find(|&&r| r as usize >= graph.num_relations()) {
        return Err(usage(format!(
            "relation {bad} out of range (the augmented set has {})",
            graph.num_relations()
        )));
    }
    let weights = match (&config.embeddings, config.train.model.uses_embeddings()) {
        (Some(p), true) => Some(load_weights(p, &graph)?),
        (Some(_), false) => {
            log::warn!("embeddings are ignored by model {}", config.train.model);
            None
        }
        _ => None,
    };
    let engine = PathEngine::new(&graph, config.train.max_length)?;
    let cache = SourceCache::build(engine, weights.as_ref(), None)?;
    log::info!("path cache: {} entries over {} distinct paths", cache.num_entries(), cache.index().len());
    let known = KnownAnswers::from_splits(&splits);
    let data = TrainingData {
        graph: &graph,
        cache: &cache,
        weights: weights.as_ref(),
        known: &known,
        valid: &splits.valid,
    };
    let models_dir = config.out.join("models");
    fs::create_dir_all(&models_dir).with_context(|| format!("creating {}", models_dir.display()))?;
    let outcomes = train_relations(&data, &relations, &config.train);
    let mut summaries = Vec::new();
    for (relation, outcome) in outcomes {
        let outcome = match outcome {
            Ok(o) => o,
            Err(Error::NoPositives(r)) => {
                log::warn!("relation {r} has no training triples; skipped");
                continue;
            }
            Err(e) => return Err(e).with_context(|| format!("training relation {relation}")),
        };
        let checkpoint = checkpoint_name(relation);
        outcome.model.save(config.out.join(&checkpoint))?;
        let log_path = config.out.join("logs").join(format!("relation_{relation:03}.csv"));
        write_log_csv(create(&log_path)?, &outcome.log)?;
        summaries.push(RelationSummary {
            relation,
            label: splits.vocab.relation_label(relation),
            iterations: outcome.iterations,
            best_valid_mrr: outcome.best_valid_mrr,
            checkpoint,
        });
    }
    let manifest = Manifest {
        version: VERSION.to_owned(),
        config: config.clone(),
        relations: summaries,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let mut out = create(&config.out.join(MANIFEST))?;
    serde_json::to_writer_pretty(&mut out, &manifest)?;
    out.flush()?;
    println!(
        "trained {} relations in {:.1}s; checkpoints under {}",
        manifest.relations.len(),
        manifest.wall_seconds,
        config.out.display()
    );
    Ok(())
}

pub fn read_manifest(run: &Path) -> anyhow::Result<Manifest> {
    let path = run.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_models(run: &Path, manifest: &Manifest, graph: &KnowledgeGraph) -> anyhow::Result<Vec<Option<RelationModel>>> {
    let mut models = vec![None; graph.num_relations()];
    for s in &manifest.relations {
        let model = RelationModel::load(run.join(&s.checkpoint))?;
        if model.num_relations() != graph.num_relations() {
            return Err(Error::Checkpoint(format!(
                "{} was trained over {} relations but the dataset has {}",
                s.checkpoint.display(),
                model.num_relations(),
                graph.num_relations()
            ))
            .into());
        }
        let slot = models
            .get_mut(model.relation() as usize)
            .ok_or_else(|| Error::Checkpoint(format!("relation {} out of range", model.relation())))?;
        *slot = Some(model);
    }
    Ok(models)
}

pub struct EvalArgs {
    pub run: PathBuf,
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub direct_only: bool,
    pub out: Option<PathBuf>,
}

pub fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let manifest = read_manifest(&args.run)?;
    let data_dir = args
        .data
        .clone()
        .or_else(|| manifest.config.data.clone())
        .ok_or_else(|| usage("no dataset directory given (--data)"))?;
    let (splits, graph) = load_splits(&data_dir)?;
    if splits.test.is_empty() {
        return Err(Error::EmptyInput("test split".into()).into());
    }
    let models = load_models(&args.run, &manifest, &graph)?;
    let mut kinds: Vec<ModelKind> = models.iter().flatten().map(RelationModel::kind).collect();
    kinds.dedup();
    let kind = match kinds.as_slice() {
        [] => bail!("no checkpoints listed in {}", args.run.join(MANIFEST).display()),
        [k] => *k,
        _ => bail!("checkpoints mix model kinds {kinds:?}"),
    };
    let max_len = models.iter().flatten().map(RelationModel::max_length).max().unwrap_or(1);
    let weights = if kind.uses_embeddings() {
        let path = args
            .embeddings
            .clone()
            .or_else(|| manifest.config.embeddings.clone())
            .ok_or_else(|| usage("mp-kge checkpoints need an embedding file (--embeddings)"))?;
        Some(load_weights(&path, &graph)?)
    } else {
        None
    };
    let mode = if args.direct_only {
        EvalMode::DirectOnly
    } else {
        EvalMode::WithInverses
    };
    let mut heads: Vec<_> = splits.test.iter().map(|t| t.head).collect();
    if mode == EvalMode::WithInverses {
        heads.extend(splits.test.iter().map(|t| t.tail));
    }
    let engine = PathEngine::new(&graph, max_len)?;
    let cache = SourceCache::build(engine, weights.as_ref(), Some(&heads))?;
    let known = KnownAnswers::from_splits(&splits);
    let report = evaluate_models(&models, &cache, &known, &splits.test, mode)?;
    let out_dir = args.out.clone().unwrap_or_else(|| args.run.clone());
    let suffix = if args.direct_only { "-direct" } else { "" };
    let mut json = create(&out_dir.join(format!("report{suffix}.json")))?;
    json.write_all(report.to_json()?.as_bytes())?;
    json.flush()?;
    let csv = create(&out_dir.join(format!("per_relation{suffix}.csv")))?;
    report.write_relation_csv(csv, &splits.vocab)?;
    println!(
        "{} queries ({mode}): MRR {:.4}  Hits@1 {:.4}  Hits@3 {:.4}  Hits@10 {:.4}",
        report.n_queries, report.mrr, report.hits1, report.hits3, report.hits10
    );
    Ok(())
}

pub struct RulesArgs {
    pub run: PathBuf,
    pub data: Option<PathBuf>,
    pub top_k: usize,
    pub out: Option<PathBuf>,
}

pub fn rules(args: &RulesArgs) -> anyhow::Result<()> {
    let manifest = read_manifest(&args.run)?;
    let data_dir = args
        .data
        .clone()
        .or_else(|| manifest.config.data.clone())
        .ok_or_else(|| usage("no dataset directory given (--data)"))?;
    let (splits, graph) = load_splits(&data_dir)?;
    let models = load_models(&args.run, &manifest, &graph)?;
    let out_dir = args.out.clone().unwrap_or_else(|| args.run.join("rules"));
    let mut written = 0;
    for model in models.iter().flatten() {
        let RelationModel::Mp(mp) = model else {
            log::warn!("relation {}: rule export covers mixture-of-paths models only", model.relation());
            continue;
        };
        let rules = extract_rules(mp, graph.num_base_relations(), args.top_k)?;
        let stem = format!("relation_{:03}", mp.relation);
        write_rules_text(create(&out_dir.join(format!("{stem}.txt")))?, &rules, &splits.vocab)?;
        let mut json = create(&out_dir.join(format!("{stem}.json")))?;
        json.write_all(rules_to_json(&rules, &splits.vocab)?.as_bytes())?;
        json.flush()?;
        written += 1;
    }
    println!("wrote rules for {written} relations to {}", out_dir.display());
    Ok(())
}

pub struct PathStatsArgs {
    pub data: PathBuf,
    pub length: usize,
    pub embeddings: Option<PathBuf>,
    pub reach_depth: usize,
    pub split: String,
    pub out: PathBuf,
}

pub fn path_stats(args: &PathStatsArgs) -> anyhow::Result<()> {
    let (splits, graph) = load_splits(&args.data)?;
    let label = |r: RelationId| splits.vocab.relation_label(r).replace(',', ";");
    let counts = path_count_matrix(&graph, args.length, None, DEFAULT_MATRIX_CAP)?;
    let path = args.out.join(format!("path_counts_len{}.csv", args.length));
    let mut out = create(&path)?;
    counts.write_csv(&mut out, label)?;
    out.flush()?;
    let big = counts.cells.iter().filter(|&&c| c > 1000.0).count();
    println!(
        "length-{} path counts: {} cells, {} above 1000, max {}",
        args.length,
        counts.cells.len(),
        big,
        counts.cells.iter().copied().fold(0.0, f64::max)
    );
    if let Some(emb) = &args.embeddings {
        let weights = load_weights(emb, &graph)?;
        let scores = path_count_matrix(&graph, args.length, Some(&weights), DEFAULT_MATRIX_CAP)?;
        let mut out = create(&args.out.join(format!("path_scores_len{}.csv", args.length)))?;
        scores.write_csv(&mut out, label)?;
        out.flush()?;
    }
    let queries = match args.split.as_str() {
        "train" => &splits.train,
        "valid" => &splits.valid,
        "test" => &splits.test,
        other => return Err(usage(format!("unknown split {other:?} (train, valid or test)"))),
    };
    let fractions = reachability_fraction(&graph, queries, args.reach_depth);
    let mut out = create(&args.out.join(format!("reachability_{}.csv", args.split)))?;
    write_reachability_csv(&mut out, &fractions)?;
    out.flush()?;
    for (d, f) in fractions.iter().enumerate() {
        println!("{} reachable within {} hops: {:.4}", args.split, d + 1, f);
    }
    Ok(())
}

pub fn train_embeddings_cmd(data: &Path, config: &EmbeddingTrainConfig, out: &Path) -> anyhow::Result<()> {
    let (_, graph) = load_splits(data)?;
    let start = Instant::now();
    let table = train_embeddings(&graph, config)?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    table.save(out)?;
    println!(
        "trained {} embeddings (d={}) in {:.1}s -> {}",
        table.family(),
        table.dim(),
        start.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}
