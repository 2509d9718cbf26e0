//! Hypothetical query generation.
//!
//! A question is answered speculatively by the LLM (several distinct
//! candidate answers), each candidate is broken into single-intent factual
//! statements, and the deduplicated union of those statements forms the
//! query pool. The raw question is always appended as a fallback query.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QuestionRecord;
use crate::exec::{map_ordered, Execution};
use crate::index::QueryRef;
use crate::llm::{CallKind, ChatRequest, LlmError, LlmProvider};
use crate::prompts::{templates, Template};
use crate::text::{collapse_whitespace, dedup_key};

pub const DEFAULT_MAX_INSTANCES: usize = 5;
pub const MAX_STATEMENT_CHARS: usize = 512;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("could not parse {call_kind} output ({message}); raw output: {raw:?}")]
    Format {
        call_kind: CallKind,
        message: String,
        raw: String,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Retrieval strategy, which also decides how the query pool is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// The raw question only.
    Naive,
    /// One whole hypothetical answer paragraph as the query.
    SingleHypothetical,
    /// Hypotheses decomposed into intent statements, plus the raw question.
    MultiIntent,
    /// At least two complementary statements about a single-subject
    /// question, plus the raw question.
    SingleSubjectSplit,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Naive => "naive",
            StrategyKind::SingleHypothetical => "single_hypothetical",
            StrategyKind::MultiIntent => "multi_intent",
            StrategyKind::SingleSubjectSplit => "single_subject_split",
        }
    }

    pub fn needs_llm(self) -> bool {
        self != StrategyKind::Naive
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "naive" => Ok(StrategyKind::Naive),
            "single_hypothetical" | "hyde" => Ok(StrategyKind::SingleHypothetical),
            "multi_intent" => Ok(StrategyKind::MultiIntent),
            "single_subject_split" | "split" => Ok(StrategyKind::SingleSubjectSplit),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypotheticalAnswer {
    pub m: u32,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentQuery {
    #[serde(flatten)]
    pub query_ref: QueryRef,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPool {
    pub question_id: String,
    pub mode: StrategyKind,
    pub queries: Vec<IntentQuery>,
    #[serde(default)]
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded_reason: Option<String>,
}

impl QueryPool {
    fn raw_only(record: &QuestionRecord, mode: StrategyKind, reason: Option<String>) -> Self {
        Self {
            question_id: record.id.clone(),
            mode,
            queries: vec![raw_query(&record.question)],
            degraded: reason.is_some(),
            degraded_reason: reason,
        }
    }

    pub fn statements(&self) -> impl Iterator<Item = &str> {
        self.queries.iter().map(|q| q.statement.as_str())
    }
}

fn raw_query(question: &str) -> IntentQuery {
    IntentQuery {
        query_ref: QueryRef::RawQuestion,
        statement: collapse_whitespace(question),
    }
}

#[derive(Debug, Clone)]
pub struct PoolConfig {
    pub mode: StrategyKind,
    pub max_instances: usize,
    /// Temperature for hypothesis generation; parsing-oriented calls use 0.
    pub temperature: f64,
    pub max_tokens: u32,
    pub exec: Execution,
}

impl PoolConfig {
    pub fn new(mode: StrategyKind) -> Self {
        Self {
            mode,
            max_instances: DEFAULT_MAX_INSTANCES,
            temperature: 0.7,
            max_tokens: 1024,
            exec: Execution::default(),
        }
    }
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+\s*[.)]|[-*•])\s+(.*)$").expect("static regex"))
}

/// Parse a numbered or bulleted list ("1.", "1)", "-", "*").
///
/// Unmarked lines following an item continue it; lines before the first
/// item are ignored. Output without any markers is read as one item per
/// non-empty line.
pub fn parse_list(text: &str) -> Vec<String> {
    let re = marker_re();
    let mut items: Vec<String> = Vec::new();
    let mut any_marker = false;
    for line in text.lines() {
        if let Some(c) = re.captures(line) {
            any_marker = true;
            items.push(c[1].to_string());
        } else if any_marker && !line.trim().is_empty() {
            if let Some(last) = items.last_mut() {
                last.push(' ');
                last.push_str(line.trim());
            }
        }
    }
    if !any_marker {
        items = text.lines().map(str::to_string).collect();
    }
    items
        .into_iter()
        .map(|s| collapse_whitespace(&s))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Collapse whitespace and cap length at [`MAX_STATEMENT_CHARS`], cutting at
/// the last sentence end (or else word boundary) that fits.
pub fn normalize_statement(text: &str) -> String {
    let s = collapse_whitespace(text);
    if s.chars().count() <= MAX_STATEMENT_CHARS {
        return s;
    }
    let limit = s
        .char_indices()
        .nth(MAX_STATEMENT_CHARS)
        .map(|(b, _)| b)
        .unwrap_or(s.len());
    let head = &s[..limit];
    let sentence_end = head
        .char_indices()
        .filter(|&(i, c)| matches!(c, '.' | '!' | '?') && head[i + c.len_utf8()..].starts_with(' '))
        .map(|(i, c)| i + c.len_utf8())
        .next_back();
    let cut = sentence_end
        .or_else(|| head.rfind(' '))
        .filter(|&c| c > 0)
        .unwrap_or(limit);
    head[..cut].trim_end().to_string()
}

fn dedup_in_order(items: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .filter(|s| seen.insert(dedup_key(s)))
        .collect()
}

fn request(
    template: &Template,
    kind: CallKind,
    question_id: &str,
    vars: &[(&str, &str)],
    temperature: f64,
    max_tokens: u32,
) -> ChatRequest {
    let (system, user) = template.render(vars);
    ChatRequest {
        question_id: question_id.to_string(),
        call_kind: kind,
        system,
        user,
        temperature,
        max_tokens,
    }
}

pub fn hypotheses_request(
    question_id: &str,
    question: &str,
    max_instances: usize,
    temperature: f64,
    max_tokens: u32,
) -> ChatRequest {
    let n = max_instances.to_string();
    request(
        &templates().hypotheses,
        CallKind::Hypotheses,
        question_id,
        &[("question", question), ("max_instances", &n)],
        temperature,
        max_tokens,
    )
}

pub fn decompose_request(
    question_id: &str,
    question: &str,
    hypothesis: &str,
    max_tokens: u32,
) -> ChatRequest {
    request(
        &templates().decompose,
        CallKind::Decompose,
        question_id,
        &[("question", question), ("hypothesis", hypothesis)],
        0.0,
        max_tokens,
    )
}

pub fn split_request(question_id: &str, question: &str, max_tokens: u32) -> ChatRequest {
    request(
        &templates().split,
        CallKind::Split,
        question_id,
        &[("question", question)],
        0.0,
        max_tokens,
    )
}

/// Re-prompt asking for a well-formed list after a parse failure.
pub fn repair_request(original: &ChatRequest, reply: &str, problem: &str) -> ChatRequest {
    let prompt = original.user.clone();
    request(
        &templates().repair,
        CallKind::Repair,
        &original.question_id,
        &[("request", &prompt), ("reply", reply), ("problem", problem)],
        0.0,
        original.max_tokens,
    )
}

/// Ask for a list; if the reply does not yield at least `min_items`
/// distinct items, re-prompt once.
pub(crate) fn ask_list(
    llm: &dyn LlmProvider,
    req: &ChatRequest,
    min_items: usize,
) -> Result<Vec<String>, GenerationError> {
    let check = |raw: &str| -> Result<Vec<String>, String> {
        let items = dedup_in_order(parse_list(raw));
        if items.len() >= min_items {
            Ok(items)
        } else if items.is_empty() {
            Err("no list items found".into())
        } else {
            Err(format!(
                "expected at least {min_items} distinct items, found {}",
                items.len()
            ))
        }
    };
    let raw = llm.complete(req)?;
    let problem = match check(&raw) {
        Ok(items) => return Ok(items),
        Err(p) => p,
    };
    log::debug!(
        "{} output unusable ({problem}); re-prompting",
        req.call_kind
    );
    let format_err = |message: String, raw: String| GenerationError::Format {
        call_kind: req.call_kind,
        message,
        raw,
    };
    match llm.complete(&repair_request(req, &raw, &problem)) {
        Ok(raw2) => check(&raw2).map_err(|m| format_err(m, raw2)),
        Err(LlmError::Unscripted { .. }) => Err(format_err(problem, raw)),
        Err(e) => Err(e.into()),
    }
}

fn require_question(question: &str) -> Result<(), GenerationError> {
    if question.trim().is_empty() {
        return Err(GenerationError::InvalidInput("empty question".into()));
    }
    Ok(())
}

/// Ask the LLM for up to `max_instances` distinct candidate answers.
pub fn generate_hypotheses(
    llm: &dyn LlmProvider,
    question_id: &str,
    question: &str,
    max_instances: usize,
    temperature: f64,
    max_tokens: u32,
) -> Result<Vec<HypotheticalAnswer>, GenerationError> {
    require_question(question)?;
    if max_instances == 0 {
        return Err(GenerationError::InvalidInput(
            "max_instances must be positive".into(),
        ));
    }
    let req = hypotheses_request(
        question_id,
        question,
        max_instances,
        temperature,
        max_tokens,
    );
    let items = ask_list(llm, &req, 1)?;
    Ok(items
        .into_iter()
        .take(max_instances)
        .enumerate()
        .map(|(i, body)| HypotheticalAnswer {
            m: i as u32 + 1,
            body,
        })
        .collect())
}

/// Break one hypothetical answer into intent statements `(m, 1..=L)`.
pub fn decompose_hypothesis(
    llm: &dyn LlmProvider,
    question_id: &str,
    question: &str,
    hypothesis: &HypotheticalAnswer,
    max_tokens: u32,
) -> Result<Vec<IntentQuery>, GenerationError> {
    if hypothesis.body.trim().is_empty() {
        return Err(GenerationError::InvalidInput("empty hypothesis".into()));
    }
    let req = decompose_request(question_id, question, &hypothesis.body, max_tokens);
    let items = ask_list(llm, &req, 1)?;
    Ok(number_statements(hypothesis.m, items))
}

fn number_statements(m: u32, items: Vec<String>) -> Vec<IntentQuery> {
    let statements = dedup_in_order(items.iter().map(|s| normalize_statement(s)).collect());
    statements
        .into_iter()
        .enumerate()
        .map(|(i, statement)| IntentQuery {
            query_ref: QueryRef::Intent { m, l: i as u32 + 1 },
            statement,
        })
        .collect()
}

/// Split a single-subject question into at least two complementary
/// statements.
pub fn split_single_subject(
    llm: &dyn LlmProvider,
    question_id: &str,
    question: &str,
    max_tokens: u32,
) -> Result<Vec<IntentQuery>, GenerationError> {
    require_question(question)?;
    let req = split_request(question_id, question, max_tokens);
    let items = ask_list(llm, &req, 2)?;
    let queries = number_statements(1, items);
    if queries.len() < 2 {
        return Err(GenerationError::Format {
            call_kind: CallKind::Split,
            message: "fewer than two distinct statements after normalization".into(),
            raw: String::new(),
        });
    }
    Ok(queries)
}

/// Merge statements in order, dropping any whose dedup key was already
/// seen (the raw question counts as seen), then append the raw question.
fn assemble(
    record: &QuestionRecord,
    mode: StrategyKind,
    statements: Vec<IntentQuery>,
) -> QueryPool {
    let raw = raw_query(&record.question);
    let mut seen = HashSet::from([dedup_key(&raw.statement)]);
    let mut queries: Vec<IntentQuery> = statements
        .into_iter()
        .filter(|q| seen.insert(dedup_key(&q.statement)))
        .collect();
    queries.push(raw);
    QueryPool {
        question_id: record.id.clone(),
        mode,
        queries,
        degraded: false,
        degraded_reason: None,
    }
}

/// Build the query pool for one question.
///
/// Generation failures do not fail the call: the pool falls back to the raw
/// question and is flagged as degraded. Errors are returned only for an
/// invalid question or a missing LLM.
pub fn build_query_pool(
    record: &QuestionRecord,
    llm: Option<&dyn LlmProvider>,
    cfg: &PoolConfig,
) -> Result<QueryPool, GenerationError> {
    require_question(&record.question)?;
    let llm = match (cfg.mode, llm) {
        (StrategyKind::Naive, _) => return Ok(QueryPool::raw_only(record, cfg.mode, None)),
        (_, Some(llm)) => llm,
        (mode, None) => {
            return Err(GenerationError::InvalidInput(format!(
                "strategy {mode} requires an LLM"
            )))
        }
    };
    let degrade = |e: GenerationError| {
        log::warn!(
            "question {}: query generation failed, using raw question: {e}",
            record.id
        );
        QueryPool::raw_only(record, cfg.mode, Some(e.to_string()))
    };
    let (qid, question) = (record.id.as_str(), record.question.as_str());

    match cfg.mode {
        StrategyKind::Naive => unreachable!(),
        StrategyKind::SingleHypothetical => {
            match generate_hypotheses(llm, qid, question, 1, cfg.temperature, cfg.max_tokens) {
                Ok(mut hyps) => {
                    let h = hyps.remove(0);
                    Ok(QueryPool {
                        question_id: record.id.clone(),
                        mode: cfg.mode,
                        queries: vec![IntentQuery {
                            query_ref: QueryRef::Intent { m: 1, l: 1 },
                            statement: collapse_whitespace(&h.body),
                        }],
                        degraded: false,
                        degraded_reason: None,
                    })
                }
                Err(e) => Ok(degrade(e)),
            }
        }
        StrategyKind::SingleSubjectSplit => {
            match split_single_subject(llm, qid, question, cfg.max_tokens) {
                Ok(statements) => Ok(assemble(record, cfg.mode, statements)),
                Err(e) => Ok(degrade(e)),
            }
        }
        StrategyKind::MultiIntent => {
            let hyps = match generate_hypotheses(
                llm,
                qid,
                question,
                cfg.max_instances,
                cfg.temperature,
                cfg.max_tokens,
            ) {
                Ok(h) => h,
                Err(e) => return Ok(degrade(e)),
            };
            let decomposed = map_ordered(&hyps, cfg.exec, |h| {
                decompose_hypothesis(llm, qid, question, h, cfg.max_tokens)
            });
            let mut statements = Vec::new();
            let mut last_err = None;
            for (h, r) in hyps.iter().zip(decomposed) {
                match r {
                    Ok(qs) => statements.extend(qs),
                    Err(e) => {
                        log::warn!("question {qid}: hypothesis {} not decomposed: {e}", h.m);
                        last_err = Some(e);
                    }
                }
            }
            if statements.is_empty() {
                let e = last_err.unwrap_or_else(|| GenerationError::Format {
                    call_kind: CallKind::Decompose,
                    message: "no statements produced".into(),
                    raw: String::new(),
                });
                return Ok(degrade(e));
            }
            Ok(assemble(record, cfg.mode, statements))
        }
    }
}
