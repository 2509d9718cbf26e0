//! End-to-end retrieval: query pool, per-query search, fusion and optional
//! answer generation, plus dataset-level evaluation.

mod cache;
mod eval;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QuestionRecord;
use crate::embedding::{
    embed_batch, EmbedError, EmbeddingProvider, EmbeddingProviderConfig, EmbeddingVector,
};
use crate::exec::{map_ordered, Execution};
use crate::fusion::{rrf_fuse, FusedRanking, FusionError, DEFAULT_OUTPUT_DEPTH, DEFAULT_SMOOTHING};
use crate::hypothesis::{
    ask_list, build_query_pool, GenerationError, PoolConfig, QueryPool, StrategyKind,
    DEFAULT_MAX_INSTANCES,
};
use crate::index::{IndexError, RankedList, VectorIndex};
use crate::llm::{
    CallKind, ChatRequest, LlmError, LlmProvider, LlmProviderConfig, RecordingLlm, TranscriptSink,
};
use crate::metrics::{vector_entropy, MetricError};
use crate::prompts::templates;

pub use cache::PoolCache;
pub use eval::{
    compare_strategies, config_fingerprint, run_evaluation, score_question, sweep, ComparisonRow,
    ComparisonTable, EvalOptions, EvalReport, QuestionFailure, SweepParam, SweepRow, SweepTable,
};

pub const DEFAULT_PER_QUERY_DEPTH: usize = 10;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid question record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn llm_provider_failure(e: &LlmError) -> bool {
    matches!(e, LlmError::Transport { .. } | LlmError::Rejected(_))
}

impl PipelineError {
    /// True when a remote backend failed (after retries), as opposed to bad
    /// input or configuration.
    pub fn is_provider_failure(&self) -> bool {
        match self {
            PipelineError::Embed(e) | PipelineError::Index(IndexError::Embed(e)) => {
                e.is_provider_failure()
            }
            PipelineError::Llm(e)
            | PipelineError::Generation(GenerationError::Llm(e))
            | PipelineError::Metric(MetricError::Judge(e)) => llm_provider_failure(e),
            _ => false,
        }
    }
}

/// Fusion-stage parameters; everything a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionParams {
    pub smoothing: u32,
    pub per_query_depth: usize,
    pub output_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Needed by every strategy except naive, and by answer generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmProviderConfig>,
    pub embedder: EmbeddingProviderConfig,
    pub fusion_smoothing: u32,
    pub per_query_depth: usize,
    pub output_depth: usize,
    pub max_instances: usize,
    pub generate_answers: bool,
    pub seed: u64,
}

impl StrategyConfig {
    pub fn new(
        kind: StrategyKind,
        embedder: EmbeddingProviderConfig,
        llm: Option<LlmProviderConfig>,
    ) -> Self {
        Self {
            kind,
            llm,
            seed: embedder.seed,
            embedder,
            fusion_smoothing: DEFAULT_SMOOTHING,
            per_query_depth: DEFAULT_PER_QUERY_DEPTH,
            output_depth: DEFAULT_OUTPUT_DEPTH,
            max_instances: DEFAULT_MAX_INSTANCES,
            generate_answers: false,
        }
    }

    pub fn params(&self) -> FusionParams {
        FusionParams {
            smoothing: self.fusion_smoothing,
            per_query_depth: self.per_query_depth,
            output_depth: self.output_depth,
        }
    }

    pub fn with_params(&self, p: FusionParams) -> Self {
        Self {
            fusion_smoothing: p.smoothing,
            per_query_depth: p.per_query_depth,
            output_depth: p.output_depth,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.fusion_smoothing == 0 {
            return bad("fusion smoothing must be positive");
        }
        if self.per_query_depth == 0 || self.output_depth == 0 {
            return bad("retrieval depths must be positive");
        }
        if self.max_instances == 0 {
            return bad("max_instances must be positive");
        }
        if self.llm.is_none() && (self.kind.needs_llm() || self.generate_answers) {
            return Err(PipelineError::Config(format!(
                "strategy {} needs an LLM configuration",
                self.kind
            )));
        }
        self.embedder.validate()?;
        if let Some(l) = &self.llm {
            l.validate()?;
        }
        Ok(())
    }

    fn max_tokens(&self) -> u32 {
        self.llm.as_ref().map_or(1024, |l| l.max_output_tokens)
    }
}

/// A configured strategy with its providers instantiated.
pub struct Strategy {
    config: StrategyConfig,
    embedder: Box<dyn EmbeddingProvider>,
    llm: Option<Box<dyn LlmProvider>>,
}

impl Strategy {
    pub fn new(config: StrategyConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let embedder = config.embedder.build()?;
        let llm = config.llm.as_ref().map(|c| c.build()).transpose()?;
        Ok(Self {
            config,
            embedder,
            llm,
        })
    }

    /// Use already-built providers (tests, custom backends).
    pub fn with_providers(
        config: StrategyConfig,
        embedder: Box<dyn EmbeddingProvider>,
        llm: Option<Box<dyn LlmProvider>>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        if embedder.dim() != config.embedder.dim {
            return Err(PipelineError::Config(format!(
                "embedder dimension {} differs from configured {}",
                embedder.dim(),
                config.embedder.dim
            )));
        }
        Ok(Self {
            config,
            embedder,
            llm,
        })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    pub fn embedder(&self) -> &dyn EmbeddingProvider {
        self.embedder.as_ref()
    }

    pub fn llm(&self) -> Option<&dyn LlmProvider> {
        self.llm.as_deref()
    }

    pub fn check_index(&self, index: &VectorIndex) -> Result<(), PipelineError> {
        if index.dim() != self.embedder.dim() {
            return Err(IndexError::DimensionMismatch {
                expected: index.dim(),
                actual: self.embedder.dim(),
            }
            .into());
        }
        Ok(())
    }

    /// Same providers, different fusion parameters.
    fn reparameterized(&self, p: FusionParams) -> StrategyView<'_> {
        StrategyView {
            config: self.config.with_params(p),
            strategy: self,
        }
    }
}

pub(crate) struct StrategyView<'a> {
    config: StrategyConfig,
    strategy: &'a Strategy,
}

/// Shared run state: execution mode, pool cache and transcript sink.
#[derive(Clone, Copy, Default)]
pub struct RunContext<'a> {
    pub exec: Execution,
    pub cache: Option<&'a PoolCache>,
    pub transcript: Option<&'a TranscriptSink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub question_id: String,
    pub strategy: StrategyKind,
    pub query_pool: QueryPool,
    pub ranked_lists: Vec<RankedList>,
    pub fused: FusedRanking,
    pub h_mix: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_answers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<String>,
    /// Wall-clock milliseconds per stage. Not serialized.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

impl PipelineResult {
    pub fn degraded(&self) -> bool {
        self.query_pool.degraded
    }

    /// Text of the fused chunks, in fused order.
    pub fn passages<'a>(&self, index: &'a VectorIndex) -> Result<Vec<&'a str>, PipelineError> {
        passages(index, &self.fused)
    }
}

fn passages<'a>(
    index: &'a VectorIndex,
    fused: &FusedRanking,
) -> Result<Vec<&'a str>, PipelineError> {
    fused
        .chunk_ids()
        .map(|id| {
            index
                .chunk(id)
                .map(|m| m.text.as_str())
                .ok_or_else(|| PipelineError::Config(format!("index has no text for chunk {id}")))
        })
        .collect()
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

fn record_transcript(ctx: &RunContext, rec: Option<RecordingLlm>) {
    if let (Some(sink), Some(rec)) = (ctx.transcript, rec) {
        let records = rec.into_records();
        if let Err(e) = sink.append(&records) {
            log::warn!(
                "could not append to transcript {}: {e}",
                sink.path().display()
            );
        }
    }
}

/// Pool, embeddings and per-query lists for one question: everything before
/// fusion. Lists are kept at the depth the question was prepared with.
#[derive(Debug, Clone)]
pub struct PreparedQuestion {
    pub record: QuestionRecord,
    pub pool: QueryPool,
    pub vectors: Vec<EmbeddingVector>,
    pub lists: Vec<RankedList>,
    pub depth: usize,
    pub h_mix: f64,
    timings: BTreeMap<String, f64>,
}

fn obtain_pool(
    record: &QuestionRecord,
    config: &StrategyConfig,
    llm: Option<&dyn LlmProvider>,
    ctx: &RunContext,
) -> Result<QueryPool, PipelineError> {
    let pool_cfg = PoolConfig {
        mode: config.kind,
        max_instances: config.max_instances,
        temperature: config.llm.as_ref().map_or(0.0, |l| l.temperature),
        max_tokens: config.max_tokens(),
        exec: ctx.exec,
    };
    let key = ctx
        .cache
        .filter(|_| config.kind.needs_llm())
        .map(|_| PoolCache::key(record, config, llm.map_or("", |l| l.model_name())));
    if let (Some(cache), Some(key)) = (ctx.cache, &key) {
        if let Some(pool) = cache.get(key) {
            return Ok(pool);
        }
    }
    let rec = ctx.transcript.and(llm).map(RecordingLlm::new);
    let provider: Option<&dyn LlmProvider> = match &rec {
        Some(r) => Some(r),
        None => llm,
    };
    let pool = build_query_pool(record, provider, &pool_cfg);
    record_transcript(ctx, rec);
    let pool = pool?;
    if let (Some(cache), Some(key)) = (ctx.cache, &key) {
        if let Err(e) = cache.put(key, &pool) {
            log::warn!("could not cache query pool for {}: {e}", record.id);
        }
    }
    Ok(pool)
}

/// Build the pool, embed every query and search each one to `depth`.
pub fn prepare_question(
    record: &QuestionRecord,
    index: &VectorIndex,
    strategy: &Strategy,
    depth: usize,
    ctx: &RunContext,
) -> Result<PreparedQuestion, PipelineError> {
    record.validate().map_err(PipelineError::InvalidRecord)?;
    strategy.check_index(index)?;
    if depth == 0 {
        return Err(PipelineError::Config(
            "retrieval depth must be positive".into(),
        ));
    }
    let mut timings = BTreeMap::new();

    let t = Instant::now();
    let pool = obtain_pool(record, &strategy.config, strategy.llm(), ctx)?;
    timings.insert("pool".to_string(), ms_since(t));

    let t = Instant::now();
    let texts: Vec<String> = pool.statements().map(str::to_string).collect();
    let vectors = embed_batch(strategy.embedder(), &texts)?;
    timings.insert("embed".to_string(), ms_since(t));

    let t = Instant::now();
    let lists = pool
        .queries
        .iter()
        .zip(&vectors)
        .map(|(q, v)| index.search_with(v, depth, ctx.exec, q.query_ref))
        .collect::<Result<Vec<_>, _>>()?;
    timings.insert("search".to_string(), ms_since(t));

    let h_mix = vector_entropy(&vectors)?;
    Ok(PreparedQuestion {
        record: record.clone(),
        pool,
        vectors,
        lists,
        depth,
        h_mix,
        timings,
    })
}

impl PreparedQuestion {
    /// Truncate lists to the per-query depth, fuse, truncate to output depth.
    pub fn fuse(&self, p: &FusionParams) -> Result<(Vec<RankedList>, FusedRanking), PipelineError> {
        if p.per_query_depth > self.depth {
            return Err(PipelineError::Config(format!(
                "per-query depth {} exceeds prepared depth {}",
                p.per_query_depth, self.depth
            )));
        }
        let lists: Vec<RankedList> = self
            .lists
            .iter()
            .map(|l| l.truncated(p.per_query_depth))
            .collect();
        let fused = rrf_fuse(&lists, p.smoothing)?.truncate(p.output_depth);
        Ok((lists, fused))
    }

    /// Fuse under `p` and, when configured, generate answers.
    pub fn finish(
        &self,
        index: &VectorIndex,
        strategy: &Strategy,
        p: &FusionParams,
        ctx: &RunContext,
    ) -> Result<PipelineResult, PipelineError> {
        let view = strategy.reparameterized(*p);
        self.finish_view(index, &view, ctx)
    }

    pub(crate) fn finish_view(
        &self,
        index: &VectorIndex,
        view: &StrategyView,
        ctx: &RunContext,
    ) -> Result<PipelineResult, PipelineError> {
        let mut timings = self.timings.clone();
        let t = Instant::now();
        let (ranked_lists, fused) = self.fuse(&view.config.params())?;
        timings.insert("fuse".to_string(), ms_since(t));

        let generated_answers = if view.config.generate_answers {
            let t = Instant::now();
            let llm = view
                .strategy
                .llm()
                .ok_or_else(|| PipelineError::Config("answer generation needs an LLM".into()))?;
            let texts = passages(index, &fused)?;
            let rec = ctx.transcript.map(|_| RecordingLlm::new(llm));
            let provider: &dyn LlmProvider = match &rec {
                Some(r) => r,
                None => llm,
            };
            let answers = generate_answer(
                provider,
                &self.record.id,
                &self.record.question,
                &texts,
                view.config.max_tokens(),
            );
            record_transcript(ctx, rec);
            timings.insert("answer".to_string(), ms_since(t));
            Some(answers?)
        } else {
            None
        };

        Ok(PipelineResult {
            question_id: self.record.id.clone(),
            strategy: view.config.kind,
            query_pool: self.pool.clone(),
            ranked_lists,
            fused,
            h_mix: self.h_mix,
            generated_answers,
            transcript_path: ctx.transcript.map(|s| s.path().display().to_string()),
            timings,
        })
    }
}

/// Run the full pipeline for one question under the strategy's own
/// parameters.
pub fn run_question(
    record: &QuestionRecord,
    index: &VectorIndex,
    strategy: &Strategy,
    ctx: &RunContext,
) -> Result<PipelineResult, PipelineError> {
    let p = strategy.config.params();
    prepare_question(record, index, strategy, p.per_query_depth, ctx)?
        .finish(index, strategy, &p, ctx)
}

/// Run several questions, results in input order.
pub fn run_questions(
    records: &[QuestionRecord],
    index: &VectorIndex,
    strategy: &Strategy,
    ctx: &RunContext,
) -> Vec<Result<PipelineResult, PipelineError>> {
    map_ordered(records, ctx.exec, |r| run_question(r, index, strategy, ctx))
}

pub fn answer_request(
    question_id: &str,
    question: &str,
    passages: &[&str],
    max_tokens: u32,
) -> ChatRequest {
    let block = passages
        .iter()
        .enumerate()
        .map(|(i, p)| format!("[{}] {}", i + 1, p.trim()))
        .collect::<Vec<_>>()
        .join("\n\n");
    let (system, user) = templates()
        .answer
        .render(&[("passages", &block), ("question", question)]);
    ChatRequest {
        question_id: question_id.to_string(),
        call_kind: CallKind::Answer,
        system,
        user,
        temperature: 0.0,
        max_tokens,
    }
}

/// Enumerate the distinct answers the passages support.
pub fn generate_answer(
    llm: &dyn LlmProvider,
    question_id: &str,
    question: &str,
    passages: &[&str],
    max_tokens: u32,
) -> Result<Vec<String>, GenerationError> {
    if passages.is_empty() {
        return Err(GenerationError::InvalidInput(
            "no passages to answer from".into(),
        ));
    }
    if question.trim().is_empty() {
        return Err(GenerationError::InvalidInput("empty question".into()));
    }
    ask_list(
        llm,
        &answer_request(question_id, question, passages, max_tokens),
        1,
    )
}
