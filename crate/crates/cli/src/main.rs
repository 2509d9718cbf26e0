//! `intentrag`: ingest, index, ask, eval, compare, sweep.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use intentrag_core::corpus::{
    chunk_document, load_chunks, load_corpus, read_qa_records, write_jsonl, DEFAULT_MAX_CHARS,
    DEFAULT_OVERLAP_CHARS,
};
use intentrag_core::embedding::{EmbedBackend, EmbedError, EmbeddingProviderConfig};
use intentrag_core::exec::{execution_for, with_workers};
use intentrag_core::fusion::{DEFAULT_OUTPUT_DEPTH, DEFAULT_SMOOTHING};
use intentrag_core::hypothesis::{StrategyKind, DEFAULT_MAX_INSTANCES};
use intentrag_core::index::{build_index, load_index, save_index, IndexError, VectorIndex};
use intentrag_core::llm::{LlmBackend, LlmError, LlmProvider, LlmProviderConfig, TranscriptSink};
use intentrag_core::metrics::{Matcher, MatcherKind};
use intentrag_core::pipeline::{
    compare_strategies, run_evaluation, run_question, sweep, EvalOptions, PipelineError, PoolCache,
    RunContext, Strategy, StrategyConfig, SweepParam, DEFAULT_PER_QUERY_DEPTH,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PROVIDER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "intentrag",
    version,
    about = "Intent-aware retrieval and evaluation"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split documents (JSONL) into chunks (JSONL).
    Ingest {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_CHARS)]
        max_chars: usize,
        #[arg(long, default_value_t = DEFAULT_OVERLAP_CHARS)]
        overlap: usize,
    },
    /// Embed chunks and write a vector index.
    Index {
        chunks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Retrieve for a single question.
    Ask {
        question: String,
        #[command(flatten)]
        run: RunArgs,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate one strategy on a QA dataset.
    Eval {
        dataset: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Report path; .csv and .md siblings are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate several strategies side by side.
    Compare {
        dataset: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',', required = true)]
        strategies: Vec<StrategyKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-evaluate over values of one fusion parameter.
    Sweep {
        dataset: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// smoothing, output_depth or per_query_depth
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// CSV path; a .json sibling holds the full reports.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct EmbedderArgs {
    /// mock or remote. Defaults to the embedder recorded in the index.
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    embed_model: Option<String>,
    #[arg(long)]
    embed_endpoint: Option<String>,
    /// Run seed; also salts the mock embedder.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value = "multi_intent")]
    strategy: StrategyKind,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    smoothing: u32,
    /// Output depth of the fused ranking.
    #[arg(long, default_value_t = DEFAULT_OUTPUT_DEPTH)]
    depth: usize,
    #[arg(long, default_value_t = DEFAULT_PER_QUERY_DEPTH)]
    per_query_depth: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_INSTANCES)]
    max_instances: usize,
    /// Generate answers from the fused passages.
    #[arg(long)]
    answers: bool,
    /// scripted or remote.
    #[arg(long, default_value = "scripted")]
    llm: String,
    /// Transcript replayed by the scripted LLM.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Append every LLM exchange to this JSONL file.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Directory for cached query pools.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Concurrent questions; 0 = one per processor.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    embedder: EmbedderArgs,
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// normalized_exact, containment or llm_judge.
    #[arg(long, default_value = "containment")]
    matcher: MatcherKind,
    /// K for recall@K; defaults to the output depth.
    #[arg(long)]
    recall_k: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        let provider = if let Some(p) = cause.downcast_ref::<PipelineError>() {
            Some(p.is_provider_failure())
        } else if let Some(x) = cause.downcast_ref::<EmbedError>() {
            Some(x.is_provider_failure())
        } else if let Some(IndexError::Embed(x)) = cause.downcast_ref::<IndexError>() {
            Some(x.is_provider_failure())
        } else {
            cause
                .downcast_ref::<LlmError>()
                .map(|l| matches!(l, LlmError::Transport { .. } | LlmError::Rejected(_)))
        };
        if let Some(p) = provider {
            return if p { EXIT_PROVIDER } else { EXIT_DATA };
        }
    }
    EXIT_DATA
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            corpus,
            out,
            max_chars,
            overlap,
        } => ingest(&corpus, &out, max_chars, overlap),
        Command::Index {
            chunks,
            out,
            embedder,
            workers,
        } => index(&chunks, &out, &embedder, workers),
        Command::Ask {
            question,
            run,
            json,
        } => ask(&question, &run, json),
        Command::Eval {
            dataset,
            run,
            eval,
            out,
        } => eval_cmd(&dataset, &run, &eval, &out),
        Command::Compare {
            dataset,
            run,
            eval,
            strategies,
            out,
        } => compare(&dataset, &run, &eval, &strategies, &out),
        Command::Sweep {
            dataset,
            run,
            eval,
            param,
            values,
            out,
        } => sweep_cmd(&dataset, &run, &eval, param, &values, &out),
    }
}

fn ingest(corpus: &Path, out: &Path, max_chars: usize, overlap: usize) -> Result<()> {
    if max_chars == 0 || overlap >= max_chars {
        bail!("--overlap must be smaller than --max-chars, and --max-chars positive");
    }
    let docs = load_corpus(corpus)?;
    let chunks: Vec<_> = docs
        .iter()
        .flat_map(|d| chunk_document(d, max_chars, overlap))
        .collect();
    write_jsonl(out, &chunks)?;
    eprintln!(
        "{} documents -> {} chunks -> {}",
        docs.len(),
        chunks.len(),
        out.display()
    );
    Ok(())
}

fn embedder_config(
    args: &EmbedderArgs,
    recorded: Option<&EmbeddingProviderConfig>,
) -> Result<EmbeddingProviderConfig> {
    let backend = match args.embedder.as_deref() {
        None => None,
        Some("mock") => Some(EmbedBackend::DeterministicMock),
        Some("remote") => Some(EmbedBackend::RemoteHttp),
        Some(other) => bail!("unknown embedder {other:?}; expected mock or remote"),
    };
    let mut cfg = match (backend, recorded) {
        (None, Some(r)) => r.clone(),
        (Some(EmbedBackend::RemoteHttp), _) => {
            let Some(dim) = args.dim.or(recorded.map(|r| r.dim)) else {
                bail!("--dim is required for the remote embedder");
            };
            let model = args
                .embed_model
                .clone()
                .unwrap_or_else(|| "text-embedding".into());
            EmbeddingProviderConfig::remote(model, dim, args.embed_endpoint.clone())
        }
        _ => EmbeddingProviderConfig::mock(args.dim.or(recorded.map(|r| r.dim)).unwrap_or(256), 0),
    };
    if let Some(d) = args.dim {
        if cfg.dim != d {
            cfg.dim = d;
            if cfg.backend == EmbedBackend::DeterministicMock {
                cfg.model_name = format!("token-hash-{d}");
            }
        }
    }
    if let Some(m) = &args.embed_model {
        cfg.model_name = m.clone();
    }
    if let Some(e) = &args.embed_endpoint {
        cfg.endpoint = Some(e.clone());
    }
    if recorded.is_none() || args.embedder.is_some() {
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
    }
    Ok(cfg)
}

fn index(chunks: &Path, out: &Path, args: &EmbedderArgs, workers: usize) -> Result<()> {
    let cfg = embedder_config(args, None)?;
    let provider = cfg.build()?;
    let chunks = load_chunks(chunks)?;
    let (mut index, warnings) = with_workers(workers, || {
        build_index(&chunks, provider.as_ref(), execution_for(workers))
    })?;
    for w in &warnings {
        log::warn!("{}: {}", w.chunk_id, w.message);
    }
    index.set_embedder(Some(cfg));
    save_index(&index, out)?;
    eprintln!(
        "indexed {} chunks (dim {}) -> {}",
        index.len(),
        index.dim(),
        out.display()
    );
    Ok(())
}

fn llm_config(run: &RunArgs) -> Result<LlmProviderConfig> {
    let mut cfg = match run.llm.as_str() {
        "scripted" => LlmProviderConfig::scripted(run.script.clone()),
        "remote" => LlmProviderConfig::remote(
            run.llm_model
                .clone()
                .unwrap_or_else(|| "gpt-4o-mini".into()),
            run.llm_endpoint.clone(),
        ),
        other => bail!("unknown LLM backend {other:?}; expected scripted or remote"),
    };
    if cfg.backend == LlmBackend::ScriptedMock {
        if let Some(m) = &run.llm_model {
            cfg.model_name = m.clone();
        }
    }
    if let Some(t) = run.temperature {
        cfg.temperature = t;
    }
    Ok(cfg)
}

fn strategy_config(
    kind: StrategyKind,
    run: &RunArgs,
    index: &VectorIndex,
) -> Result<StrategyConfig> {
    let embedder = embedder_config(&run.embedder, index.embedder())?;
    let needs_llm = kind.needs_llm() || run.answers;
    let llm = if needs_llm {
        Some(llm_config(run)?)
    } else {
        None
    };
    let mut cfg = StrategyConfig::new(kind, embedder, llm);
    cfg.fusion_smoothing = run.smoothing;
    cfg.output_depth = run.depth;
    cfg.per_query_depth = run.per_query_depth;
    cfg.max_instances = run.max_instances;
    cfg.generate_answers = run.answers;
    if let Some(s) = run.embedder.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

struct Session {
    index: VectorIndex,
    cache: Option<PoolCache>,
    sink: Option<TranscriptSink>,
}

impl Session {
    fn open(run: &RunArgs) -> Result<Self> {
        let index = load_index(&run.index)
            .with_context(|| format!("loading index {}", run.index.display()))?;
        let cache = run
            .cache_dir
            .as_deref()
            .map(PoolCache::on_disk)
            .transpose()
            .context("opening pool cache")?;
        let sink = run
            .transcript
            .as_deref()
            .map(TranscriptSink::create)
            .transpose()
            .context("opening transcript")?;
        Ok(Self { index, cache, sink })
    }

    fn context(&self, workers: usize) -> RunContext<'_> {
        RunContext {
            exec: execution_for(workers),
            cache: self.cache.as_ref(),
            transcript: self.sink.as_ref(),
        }
    }
}

fn ask(question: &str, run: &RunArgs, json: bool) -> Result<()> {
    let session = Session::open(run)?;
    let strategy = Strategy::new(strategy_config(run.strategy, run, &session.index)?)?;
    let record = intentrag_core::QuestionRecord {
        id: "ask".into(),
        domain: String::new(),
        question: question.to_string(),
        gold: Default::default(),
    };
    let ctx = session.context(run.workers);
    let result = with_workers(run.workers, || {
        run_question(&record, &session.index, &strategy, &ctx)
    })?;
    if json {
        println!("{}", serde_json::to_string_pretty(&result)?);
        return Ok(());
    }
    if result.degraded() {
        println!(
            "query generation degraded: {}",
            result
                .query_pool
                .degraded_reason
                .as_deref()
                .unwrap_or("unknown")
        );
    }
    println!("queries:");
    for q in &result.query_pool.queries {
        println!("  {:<10} {}", q.query_ref.to_string(), q.statement);
    }
    println!("fused (smoothing {}):", result.fused.smoothing);
    for (i, e) in result.fused.entries.iter().enumerate() {
        let via: Vec<String> = e
            .contributions
            .iter()
            .map(|c| format!("{}@{}", c.query_ref, c.rank))
            .collect();
        println!(
            "  {:>3}. {:<24} {:.6}  [{}]",
            i + 1,
            e.chunk_id,
            e.score,
            via.join(", ")
        );
    }
    if let Some(answers) = &result.generated_answers {
        println!("answers:");
        for a in answers {
            println!("  - {a}");
        }
    }
    Ok(())
}

/// Matcher plus the judge LLM it may borrow.
fn with_matcher<R>(
    kind: MatcherKind,
    run: &RunArgs,
    f: impl FnOnce(Matcher) -> Result<R>,
) -> Result<R> {
    match kind {
        MatcherKind::NormalizedExact => f(Matcher::NormalizedExact),
        MatcherKind::Containment => f(Matcher::Containment),
        MatcherKind::LlmJudge => {
            let judge: Box<dyn LlmProvider> = llm_config(run)?.build()?;
            f(Matcher::Judge(judge.as_ref()))
        }
    }
}

fn options<'a>(
    matcher: Matcher<'a>,
    run: &RunArgs,
    eval: &EvalArgs,
    session: &'a Session,
) -> EvalOptions<'a> {
    EvalOptions {
        matcher,
        workers: run.workers,
        recall_k: eval.recall_k,
        cache: session.cache.as_ref(),
        transcript: session.sink.as_ref(),
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn eval_cmd(dataset: &Path, run: &RunArgs, eval: &EvalArgs, out: &Path) -> Result<()> {
    let records = read_qa_records(dataset)?;
    let session = Session::open(run)?;
    let strategy = Strategy::new(strategy_config(run.strategy, run, &session.index)?)?;
    let report = with_matcher(eval.matcher, run, |m| {
        Ok(run_evaluation(
            &records,
            &session.index,
            &strategy,
            &options(m, run, eval, &session),
        )?)
    })?;
    write(out, &report.to_json())?;
    write(&sibling(out, "csv"), &report.to_csv())?;
    write(&sibling(out, "md"), &report.to_markdown())?;
    print!("{}", report.to_markdown());
    Ok(())
}

fn compare(
    dataset: &Path,
    run: &RunArgs,
    eval: &EvalArgs,
    kinds: &[StrategyKind],
    out: &Path,
) -> Result<()> {
    let records = read_qa_records(dataset)?;
    let session = Session::open(run)?;
    let strategies = kinds
        .iter()
        .map(|&k| Ok(Strategy::new(strategy_config(k, run, &session.index)?)?))
        .collect::<Result<Vec<_>>>()?;
    let table = with_matcher(eval.matcher, run, |m| {
        Ok(compare_strategies(
            &records,
            &session.index,
            &strategies,
            &options(m, run, eval, &session),
        )?)
    })?;
    write(
        &sibling(out, "json"),
        &(serde_json::to_string_pretty(&table)? + "\n"),
    )?;
    write(&sibling(out, "csv"), &table.to_csv())?;
    write(&sibling(out, "md"), &table.to_markdown())?;
    print!("{}", table.to_markdown());
    Ok(())
}

fn sweep_cmd(
    dataset: &Path,
    run: &RunArgs,
    eval: &EvalArgs,
    param: SweepParam,
    values: &[usize],
    out: &Path,
) -> Result<()> {
    let records = read_qa_records(dataset)?;
    let session = Session::open(run)?;
    let strategy = Strategy::new(strategy_config(run.strategy, run, &session.index)?)?;
    let table = with_matcher(eval.matcher, run, |m| {
        Ok(sweep(
            &records,
            &session.index,
            &strategy,
            param,
            values,
            &options(m, run, eval, &session),
        )?)
    })?;
    write(out, &table.to_csv())?;
    write(
        &sibling(out, "json"),
        &(serde_json::to_string_pretty(&table)? + "\n"),
    )?;
    print!("{}", table.to_csv());
    Ok(())
}
