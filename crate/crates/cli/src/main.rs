mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pathmix_core::{EmbeddingTrainConfig, KgeFamily, ModelKind};

use crate::commands::{EvalArgs, PathStatsArgs, RulesArgs};
use crate::config::{parse_relations, usage, RunConfig, UsageError};

#[derive(Parser)]
#[command(name = "pathmix", version = commands::VERSION, about = "Rule learning over relation paths for knowledge base completion")]
struct Cli {
    /// Worker threads (0 = available parallelism; 1 = serial reference mode).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per relation and write checkpoints, logs and a manifest.
    Train(TrainArgs),
    /// Rank the test split with trained checkpoints.
    Eval {
        /// Output directory of a `train` run.
        #[arg(long)]
        run: PathBuf,
        /// Dataset directory (defaults to the one recorded in the manifest).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Score only the original query direction.
        #[arg(long)]
        direct_only: bool,
        /// Report directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the highest-weighted rules of mixture-of-paths checkpoints.
    Rules {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Defaults to `<run>/rules`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Graph-wide path count matrices and reachability fractions.
    PathStats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2)]
        length: usize,
        /// Also write embedding-weighted path score matrices.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        reach_depth: usize,
        #[arg(long, default_value = "valid")]
        split: String,
        #[arg(long, default_value = "path-stats")]
        out: PathBuf,
    },
    /// Train a small embedding table for embedding-weighted path scores.
    TrainEmbeddings(EmbeddingArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat `key = value` file; command-line options take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long)]
    data: Option<PathBuf>,
    /// cm, mp or mp-kge.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Embedding table; required by mp-kge.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Run directory [default: run].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated relation ids over the inverse-augmented set.
    #[arg(long)]
    relations: Option<String>,
    /// Longest rule body.
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    /// Hinge margin.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Truth threshold of the conjunction.
    #[arg(long)]
    alpha: Option<f64>,
}

impl TrainArgs {
    fn resolve(&self, threads: Option<usize>) -> anyhow::Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        if let Some(v) = &self.data {
            c.data = Some(v.clone());
        }
        if let Some(v) = self.model {
            c.train.model = v;
        }
        if let Some(v) = &self.embeddings {
            c.embeddings = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = &self.relations {
            c.relations = parse_relations(v)?;
        }
        let t = &mut c.train;
        if let Some(v) = self.max_len {
            t.max_length = v;
        }
        if let Some(v) = self.step_size {
            t.step_size = v;
        }
        if let Some(v) = self.gamma {
            t.margin = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.max_iters {
            t.max_iterations = v;
        }
        if let Some(v) = self.eval_every {
            t.eval_every = v;
        }
        if let Some(v) = self.patience {
            t.patience = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.alpha {
            t.alpha = v;
        }
        if let Some(v) = threads {
            c.threads = v;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct EmbeddingArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// similarity or distance
    #[arg(long, default_value = "similarity")]
    family: KgeFamily,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    negatives: usize,
    #[arg(long, default_value_t = 5e-3)]
    regularization: f64,
    /// Distance-family margin.
    #[arg(long, default_value_t = pathmix_core::kge::DEFAULT_MARGIN)]
    margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn init_threads(threads: usize) -> anyhow::Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| usage(format!("cannot configure {threads} threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => {
            let config = args.resolve(cli.threads)?;
            if args.print_config {
                print!("{}", config.render());
                return Ok(());
            }
            init_threads(config.threads)?;
            commands::train(&config)
        }
        Command::Eval {
            run,
            data,
            embeddings,
            direct_only,
            out,
        } => {
            init_threads(cli.threads.unwrap_or(0))?;
            commands::eval(&EvalArgs {
                run,
                data,
                embeddings,
                direct_only,
                out,
            })
        }
        Command::Rules { run, data, top_k, out } => commands::rules(&RulesArgs { run, data, top_k, out }),
        Command::PathStats {
            data,
            length,
            embeddings,
            reach_depth,
            split,
            out,
        } => {
            init_threads(cli.threads.unwrap_or(0))?;
            commands::path_stats(&PathStatsArgs {
                data,
                length,
                embeddings,
                reach_depth,
                split,
                out,
            })
        }
        Command::TrainEmbeddings(a) => {
            init_threads(cli.threads.unwrap_or(0))?;
            let config = EmbeddingTrainConfig {
                family: a.family,
                dim: a.dim,
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                negatives: a.negatives,
                regularization: a.regularization,
                margin: a.margin,
                seed: a.seed,
                ..Default::default()
            };
            commands::train_embeddings_cmd(&a.data, &config, &a.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
