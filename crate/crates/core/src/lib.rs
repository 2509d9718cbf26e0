//! Intent-aware retrieval for multi-intent questions.
//!
//! Questions are expanded into pools of hypothetical intent statements,
//! each statement is searched against an exact dense index, and the ranked
//! lists are merged with reciprocal rank fusion. Evaluation utilities score
//! retrieval and generated answers against gold annotations.

pub mod corpus;
pub mod embedding;
pub mod exec;
pub mod fusion;
pub mod http;
pub mod hypothesis;
pub mod index;
pub mod limiter;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod text;

pub use corpus::{Chunk, Document, FactualUnit, GoldAnnotation, QuestionRecord};
pub use embedding::{EmbeddingProvider, EmbeddingProviderConfig, EmbeddingVector};
pub use exec::Execution;
pub use fusion::{rrf_fuse, FusedRanking};
pub use hypothesis::{build_query_pool, QueryPool, StrategyKind};
pub use index::{QueryRef, RankedList, VectorIndex};
pub use llm::{LlmProvider, LlmProviderConfig};
pub use pipeline::{
    run_evaluation, run_question, EvalReport, PipelineResult, Strategy, StrategyConfig,
};
