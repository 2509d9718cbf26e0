use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{
    prepare_question, FusionParams, PipelineError, PipelineResult, PreparedQuestion, RunContext,
    Strategy, StrategyConfig,
};
use crate::corpus::QuestionRecord;
use crate::exec::{execution_for, map_ordered, with_workers};
use crate::hypothesis::StrategyKind;
use crate::index::VectorIndex;
use crate::metrics::{
    answer_metrics, exact_match, information_recall_rate, recall_at_k, token_f1, Matcher,
    MatcherKind, AA, AC, EM, F1, H_MIX, IRR,
};
use crate::prompts::templates;

use super::PoolCache;
use crate::llm::TranscriptSink;

/// Evaluation-wide settings that are not part of a strategy.
#[derive(Clone, Copy)]
pub struct EvalOptions<'a> {
    pub matcher: Matcher<'a>,
    /// Concurrent questions; 0 means one per processor.
    pub workers: usize,
    /// K for R@K; defaults to the strategy's output depth.
    pub recall_k: Option<usize>,
    pub cache: Option<&'a PoolCache>,
    pub transcript: Option<&'a TranscriptSink>,
}

impl<'a> EvalOptions<'a> {
    pub fn new(matcher: Matcher<'a>) -> Self {
        Self {
            matcher,
            workers: 0,
            recall_k: None,
            cache: None,
            transcript: None,
        }
    }

    fn context(&self) -> RunContext<'a> {
        RunContext {
            exec: execution_for(self.workers),
            cache: self.cache,
            transcript: self.transcript,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionFailure {
    pub question_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: StrategyKind,
    pub config_fingerprint: String,
    pub matcher: MatcherKind,
    pub fusion_smoothing: u32,
    pub per_query_depth: usize,
    pub output_depth: usize,
    pub recall_k: usize,
    pub question_count: usize,
    pub evaluated: usize,
    /// question id → metric name → value
    pub per_question: BTreeMap<String, BTreeMap<String, f64>>,
    /// Mean of each metric over the questions that have it.
    pub aggregates: BTreeMap<String, f64>,
    /// Questions whose query generation fell back to the raw question.
    pub degraded: Vec<String>,
    pub failure_count: usize,
    pub failures: Vec<QuestionFailure>,
}

fn aggregate(per_question: &BTreeMap<String, BTreeMap<String, f64>>) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for metrics in per_question.values() {
        for (name, v) in metrics {
            let s = sums.entry(name.clone()).or_insert((0.0, 0));
            s.0 += v;
            s.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

/// Stable metric column order.
fn metric_columns<'a>(names: impl Iterator<Item = &'a String>) -> Vec<String> {
    const FIXED: [&str; 6] = [H_MIX, IRR, AA, AC, EM, F1];
    let all: BTreeSet<&String> = names.collect();
    let mut cols: Vec<String> = FIXED
        .iter()
        .filter(|f| all.iter().any(|n| n == f))
        .map(|s| s.to_string())
        .collect();
    cols.extend(
        all.into_iter()
            .filter(|n| !FIXED.contains(&n.as_str()))
            .cloned(),
    );
    cols
}

fn fmt_metric(v: Option<&f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    pub fn recompute_aggregates(&self) -> BTreeMap<String, f64> {
        aggregate(&self.per_question)
    }

    pub fn columns(&self) -> Vec<String> {
        metric_columns(self.per_question.values().flat_map(|m| m.keys()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per question.
    pub fn to_csv(&self) -> String {
        let cols = self.columns();
        let mut out = format!("question_id,{}\n", cols.join(","));
        for (qid, m) in &self.per_question {
            let vals: Vec<String> = cols.iter().map(|c| fmt_metric(m.get(c))).collect();
            let _ = writeln!(out, "{},{}", csv_field(qid), vals.join(","));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let cols = self.columns();
        let mut out = String::new();
        let _ = writeln!(out, "| Strategy | {} |", cols.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(cols.len()));
        let vals: Vec<String> = cols
            .iter()
            .map(|c| fmt_metric(self.aggregates.get(c)))
            .collect();
        let _ = writeln!(out, "| {} | {} |", self.strategy, vals.join(" | "));
        let _ = writeln!(
            out,
            "\n{} of {} questions evaluated, {} failed, {} degraded. Fingerprint `{}`.",
            self.evaluated,
            self.question_count,
            self.failure_count,
            self.degraded.len(),
            self.config_fingerprint
        );
        out
    }
}

/// Hash of the strategy, matcher, recall depth, prompt versions and index.
pub fn config_fingerprint(
    c: &StrategyConfig,
    matcher: MatcherKind,
    recall_k: usize,
    index_hash: &str,
) -> String {
    let llm = c.llm.as_ref().map(|l| {
        json!({
            "backend": l.backend,
            "model": l.model_name,
            "temperature": l.temperature,
            "max_output_tokens": l.max_output_tokens,
        })
    });
    let material = json!({
        "kind": c.kind,
        "llm": llm,
        "embedder": {
            "backend": c.embedder.backend,
            "model": c.embedder.model_name,
            "dim": c.embedder.dim,
            "seed": c.embedder.seed,
        },
        "fusion_smoothing": c.fusion_smoothing,
        "per_query_depth": c.per_query_depth,
        "output_depth": c.output_depth,
        "max_instances": c.max_instances,
        "generate_answers": c.generate_answers,
        "seed": c.seed,
        "matcher": matcher,
        "recall_k": recall_k,
        "prompts": templates().hashes(),
        "index": index_hash,
    });
    hex::encode(Sha256::digest(material.to_string().as_bytes()))
}

/// Metrics for one question, as far as its gold annotation allows.
pub fn score_question(
    record: &QuestionRecord,
    result: &PipelineResult,
    index: &VectorIndex,
    matcher: &Matcher,
    recall_k: usize,
) -> Result<BTreeMap<String, f64>, PipelineError> {
    let gold = &record.gold;
    let mut m = BTreeMap::new();
    m.insert(H_MIX.to_string(), result.h_mix);
    if !gold.factual_units.is_empty() {
        let passages = result.passages(index)?;
        m.insert(
            IRR.to_string(),
            information_recall_rate(&passages, &gold.factual_units, matcher)?.value,
        );
    }
    if !gold.gold_passage_ids.is_empty() {
        let r = recall_at_k(&result.fused, &gold.gold_passage_ids, recall_k, |c| {
            index.doc_id(c).map(str::to_string)
        })?;
        m.insert(r.name, r.value);
    }
    if let (Some(answers), false) = (&result.generated_answers, gold.gold_answers.is_empty()) {
        let (aa, ac) = answer_metrics(answers, &gold.gold_answers, matcher)?;
        m.insert(AA.to_string(), aa.value);
        m.insert(AC.to_string(), ac.value);
        let prediction = answers.first().map_or("", String::as_str);
        m.insert(EM.to_string(), exact_match(prediction, &gold.gold_answers)?);
        m.insert(F1.to_string(), token_f1(prediction, &gold.gold_answers)?);
    }
    Ok(m)
}

type Prepared = Result<PreparedQuestion, String>;

fn duplicate_ids(dataset: &[QuestionRecord]) -> Vec<bool> {
    let mut seen = HashSet::new();
    dataset
        .iter()
        .map(|r| !seen.insert(r.id.as_str()))
        .collect()
}

fn prepare_all(
    dataset: &[QuestionRecord],
    index: &VectorIndex,
    strategy: &Strategy,
    depth: usize,
    opts: &EvalOptions,
) -> Vec<Prepared> {
    let ctx = opts.context();
    let dup = duplicate_ids(dataset);
    let items: Vec<(&QuestionRecord, bool)> = dataset.iter().zip(dup).collect();
    with_workers(opts.workers, || {
        map_ordered(&items, ctx.exec, |&(rec, dup)| {
            if dup {
                return Err(format!("duplicate question id {:?}", rec.id));
            }
            prepare_question(rec, index, strategy, depth, &ctx).map_err(|e| {
                log::warn!("question {} failed: {e}", rec.id);
                e.to_string()
            })
        })
    })
}

/// Per-question metrics and whether the pool degraded.
type Scored = (BTreeMap<String, f64>, bool);

fn report_from_prepared(
    dataset: &[QuestionRecord],
    prepared: &[Prepared],
    index: &VectorIndex,
    strategy: &Strategy,
    params: FusionParams,
    index_hash: &str,
    opts: &EvalOptions,
) -> EvalReport {
    let view = strategy.reparameterized(params);
    let recall_k = opts.recall_k.unwrap_or(params.output_depth);
    let ctx = opts.context();
    let scored: Vec<Result<Scored, String>> = with_workers(opts.workers, || {
        map_ordered(prepared, ctx.exec, |p| {
            let p = p.as_ref().map_err(Clone::clone)?;
            let result = p
                .finish_view(index, &view, &ctx)
                .map_err(|e| e.to_string())?;
            let m = score_question(&p.record, &result, index, &opts.matcher, recall_k)
                .map_err(|e| e.to_string())?;
            Ok((m, result.degraded()))
        })
    });

    let mut per_question = BTreeMap::new();
    let mut degraded = Vec::new();
    let mut failures = Vec::new();
    for (rec, s) in dataset.iter().zip(scored) {
        match s {
            Ok((m, d)) => {
                if d {
                    degraded.push(rec.id.clone());
                }
                per_question.insert(rec.id.clone(), m);
            }
            Err(message) => failures.push(QuestionFailure {
                question_id: rec.id.clone(),
                message,
            }),
        }
    }
    EvalReport {
        strategy: view.config.kind,
        config_fingerprint: config_fingerprint(
            &view.config,
            opts.matcher.kind(),
            recall_k,
            index_hash,
        ),
        matcher: opts.matcher.kind(),
        fusion_smoothing: params.smoothing,
        per_query_depth: params.per_query_depth,
        output_depth: params.output_depth,
        recall_k,
        question_count: dataset.len(),
        evaluated: per_question.len(),
        aggregates: aggregate(&per_question),
        per_question,
        degraded,
        failure_count: failures.len(),
        failures,
    }
}

/// Evaluate a dataset. Only configuration problems (such as an embedder
/// whose dimension differs from the index) fail the call; per-question
/// errors are collected in the report.
pub fn run_evaluation(
    dataset: &[QuestionRecord],
    index: &VectorIndex,
    strategy: &Strategy,
    opts: &EvalOptions,
) -> Result<EvalReport, PipelineError> {
    strategy.check_index(index)?;
    let params = strategy.config().params();
    let prepared = prepare_all(dataset, index, strategy, params.per_query_depth, opts);
    Ok(report_from_prepared(
        dataset,
        &prepared,
        index,
        strategy,
        params,
        &index.content_hash(),
        opts,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn columns(&self) -> Vec<String> {
        metric_columns(
            self.rows
                .iter()
                .filter_map(|r| r.report.as_ref())
                .flat_map(|r| r.aggregates.keys()),
        )
    }

    pub fn to_markdown(&self) -> String {
        let cols = self.columns();
        let mut out = String::new();
        let _ = writeln!(out, "| Strategy | {} | Failures | Note |", cols.join(" | "));
        let _ = writeln!(out, "|---|{}---|---|", "---|".repeat(cols.len()));
        for r in &self.rows {
            let (vals, failures, note) = match (&r.report, &r.error) {
                (Some(rep), _) => (
                    cols.iter()
                        .map(|c| fmt_metric(rep.aggregates.get(c)))
                        .collect::<Vec<_>>(),
                    rep.failure_count.to_string(),
                    String::new(),
                ),
                (None, e) => (
                    vec![String::new(); cols.len()],
                    String::new(),
                    e.clone().unwrap_or_default(),
                ),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {failures} | {} |",
                r.strategy,
                vals.join(" | "),
                note.replace('|', "/")
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let cols = self.columns();
        let mut out = format!("strategy,{},failures,error\n", cols.join(","));
        for r in &self.rows {
            let vals: Vec<String> = cols
                .iter()
                .map(|c| fmt_metric(r.report.as_ref().and_then(|rep| rep.aggregates.get(c))))
                .collect();
            let failures = r
                .report
                .as_ref()
                .map_or(String::new(), |rep| rep.failure_count.to_string());
            let _ = writeln!(
                out,
                "{},{},{failures},{}",
                csv_field(&r.strategy),
                vals.join(","),
                csv_field(r.error.as_deref().unwrap_or(""))
            );
        }
        out
    }
}

/// Evaluate each strategy on the same dataset. A strategy that cannot run
/// (for example an embedder that does not fit the index) yields a row with
/// an error instead of a report.
pub fn compare_strategies(
    dataset: &[QuestionRecord],
    index: &VectorIndex,
    strategies: &[Strategy],
    opts: &EvalOptions,
) -> Result<ComparisonTable, PipelineError> {
    if strategies.len() < 2 {
        return Err(PipelineError::Config(
            "comparison needs at least two strategies".into(),
        ));
    }
    let rows = strategies
        .iter()
        .map(|s| {
            let label = s.config().kind.to_string();
            match run_evaluation(dataset, index, s, opts) {
                Ok(report) => ComparisonRow {
                    strategy: label,
                    report: Some(report),
                    error: None,
                },
                Err(e) => {
                    log::warn!("strategy {label} failed: {e}");
                    ComparisonRow {
                        strategy: label,
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(ComparisonTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    FusionSmoothing,
    OutputDepth,
    PerQueryDepth,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::FusionSmoothing => "fusion_smoothing",
            SweepParam::OutputDepth => "output_depth",
            SweepParam::PerQueryDepth => "per_query_depth",
        }
    }

    fn apply(self, base: FusionParams, value: usize) -> FusionParams {
        match self {
            SweepParam::FusionSmoothing => FusionParams {
                smoothing: value as u32,
                ..base
            },
            SweepParam::OutputDepth => FusionParams {
                output_depth: value,
                ..base
            },
            SweepParam::PerQueryDepth => FusionParams {
                per_query_depth: value,
                ..base
            },
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "smoothing" | "fusion_smoothing" | "k" => Ok(SweepParam::FusionSmoothing),
            "depth" | "output_depth" => Ok(SweepParam::OutputDepth),
            "per_query_depth" | "query_depth" => Ok(SweepParam::PerQueryDepth),
            other => Err(format!("unknown sweep parameter {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let cols = metric_columns(self.rows.iter().flat_map(|r| r.report.aggregates.keys()));
        let mut out = format!(
            "{},{},evaluated,failures\n",
            self.param.as_str(),
            cols.join(",")
        );
        for r in &self.rows {
            let vals: Vec<String> = cols
                .iter()
                .map(|c| fmt_metric(r.report.aggregates.get(c)))
                .collect();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.value,
                vals.join(","),
                r.report.evaluated,
                r.report.failure_count
            );
        }
        out
    }
}

/// Evaluate once per value of `param`, everything else fixed. Query pools,
/// embeddings and searches are computed once and reused for every value.
pub fn sweep(
    dataset: &[QuestionRecord],
    index: &VectorIndex,
    strategy: &Strategy,
    param: SweepParam,
    values: &[usize],
    opts: &EvalOptions,
) -> Result<SweepTable, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::Config(
            "sweep needs at least one value".into(),
        ));
    }
    if values.contains(&0) {
        return Err(PipelineError::Config(
            "sweep values must be positive".into(),
        ));
    }
    if values.iter().collect::<HashSet<_>>().len() != values.len() {
        return Err(PipelineError::Config(
            "sweep values must be distinct".into(),
        ));
    }
    if param == SweepParam::FusionSmoothing && values.iter().any(|&v| v > u32::MAX as usize) {
        return Err(PipelineError::Config("smoothing value out of range".into()));
    }
    strategy.check_index(index)?;
    let base = strategy.config().params();
    let depth = match param {
        SweepParam::PerQueryDepth => values.iter().copied().max().unwrap_or(base.per_query_depth),
        _ => base.per_query_depth,
    };
    let prepared = prepare_all(dataset, index, strategy, depth, opts);
    let index_hash = index.content_hash();
    let rows = values
        .iter()
        .map(|&v| SweepRow {
            value: v,
            report: report_from_prepared(
                dataset,
                &prepared,
                index,
                strategy,
                param.apply(base, v),
                &index_hash,
                opts,
            ),
        })
        .collect();
    Ok(SweepTable { param, rows })
}
