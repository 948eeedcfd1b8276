//! Run configuration: defaults, flat `key = value` files, command-line
//! overrides (highest precedence).

use std::fmt;
use std::path::{Path, PathBuf};

use pathmix_core::{ModelKind, RelationId, TrainConfig};
use serde::{Deserialize, Serialize};

/// Bad input from the user; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    /// Relation ids over the inverse-augmented set; empty means all.
    pub relations: Vec<RelationId>,
    /// 0 means available parallelism.
    pub threads: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            embeddings: None,
            out: PathBuf::from("run"),
            relations: Vec::new(),
            threads: 0,
            train: TrainConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "data",
    "model",
    "embeddings",
    "out",
    "relations",
    "threads",
    "max_len",
    "step_size",
    "gamma",
    "batch_size",
    "max_iters",
    "eval_every",
    "patience",
    "seed",
    "alpha",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> anyhow::Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value {value:?} for {key}")))
}

pub fn parse_relations(value: &str) -> anyhow::Result<Vec<RelationId>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse("relations", s))
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let t = &mut self.train;
        match key {
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "embeddings" => self.embeddings = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "relations" => self.relations = parse_relations(value)?,
            "threads" => self.threads = parse(key, value)?,
            "model" => {
                t.model = value.parse::<ModelKind>().map_err(|e| usage(e.to_string()))?;
            }
            "max_len" => t.max_length = parse(key, value)?,
            "step_size" => t.step_size = parse(key, value)?,
            "gamma" => t.margin = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "max_iters" => t.max_iterations = parse(key, value)?,
            "eval_every" => t.eval_every = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "alpha" => t.alpha = parse(key, value)?,
            other => return Err(usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_text(&mut self, text: &str, source: &str) -> anyhow::Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(usage(format!("{source}:{}: expected key = value", i + 1)));
            };
            self.set(k.trim(), v.trim())
                .map_err(|e| usage(format!("{source}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "data" => path(&self.data),
            "embeddings" => path(&self.embeddings),
            "out" => self.out.display().to_string(),
            "relations" => self
                .relations
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "threads" => self.threads.to_string(),
            "model" => t.model.to_string(),
            "max_len" => t.max_length.to_string(),
            "step_size" => t.step_size.to_string(),
            "gamma" => t.margin.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "max_iters" => t.max_iterations.to_string(),
            "eval_every" => t.eval_every.to_string(),
            "patience" => t.patience.to_string(),
            "seed" => t.seed.to_string(),
            "alpha" => t.alpha.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key with its effective value, in a form `apply_text` accepts.
    pub fn render(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k))).collect()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.data.is_none() {
            return Err(usage("no dataset directory given (--data)"));
        }
        if self.train.model.uses_embeddings() && self.embeddings.is_none() {
            return Err(usage("model mp-kge requires an embedding file (--embeddings)"));
        }
        self.train.validate().map_err(|e| usage(e.to_string()))
    }
}
