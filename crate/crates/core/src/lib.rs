//! Rule learning for knowledge base completion with weighted real-valued
//! logic operators over relation-path counts.

pub mod error;
pub mod eval;
pub mod kg;
pub mod kge;
pub mod lnn;
pub mod models;
pub mod paths;
pub mod training;

pub use error::{Error, Result};
pub use eval::{EvalMode, QueryResult, RankingReport};
pub use kg::{DatasetSplits, KnowledgeGraph, KnownAnswers, RelationId, Triple, VertexId, Vocabularies};
pub use kge::{EmbeddingTable, EmbeddingTrainConfig, KgeFamily};
pub use lnn::{ConjunctionParams, PredicateParams};
pub use models::{CmModel, ModelKind, MpModel, PathScorer, RelationModel, Rule};
pub use paths::{EdgeMask, EdgeWeights, PathCodec, PathCountTable, PathEngine, PathIndex, PathRow, PathVocabulary, RelationPath, SourceCache};
pub use training::{TrainConfig, TrainOutcome, TrainingData};
