//! Retrieval and answer metrics.

mod entropy;
mod matching;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::FactualUnit;
use crate::fusion::FusedRanking;
use crate::llm::LlmError;
use crate::text::{answer_tokens, normalize_answer};

pub use entropy::{mixture_distribution, vector_entropy, DistributionVector};
pub use matching::{
    covered_units, judge_request, match_units, GoldUnit, MatchOutcome, Matcher, MatcherConfig,
    MatcherKind, Verdict,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric {0} is undefined: empty gold set")]
    UndefinedMetric(&'static str),
    #[error("duplicate gold id {0:?}")]
    DuplicateGoldId(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("judge failed: {0}")]
    Judge(#[from] LlmError),
}

pub const IRR: &str = "irr";
pub const AA: &str = "aa";
pub const AC: &str = "ac";
pub const EM: &str = "em";
pub const F1: &str = "f1";
pub const H_MIX: &str = "h_mix";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerator: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denominator: Option<usize>,
    /// Set when the metric was defined as 0 because there was nothing to score.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub empty_output: bool,
}

impl MetricValue {
    pub fn ratio(name: impl Into<String>, numerator: usize, denominator: usize) -> Self {
        let value = if denominator == 0 {
            0.0
        } else {
            numerator as f64 / denominator as f64
        };
        Self {
            name: name.into(),
            value,
            numerator: Some(numerator),
            denominator: Some(denominator),
            empty_output: denominator == 0,
        }
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            numerator: None,
            denominator: None,
            empty_output: false,
        }
    }
}

/// Share of gold factual units covered by at least one retrieved passage.
pub fn information_recall_rate<S: AsRef<str>>(
    passages: &[S],
    gold_units: &[FactualUnit],
    matcher: &Matcher,
) -> Result<MetricValue, MetricError> {
    if gold_units.is_empty() {
        return Err(MetricError::UndefinedMetric(IRR));
    }
    let gold = GoldUnit::from_factual(gold_units);
    let covered = covered_units(passages, &gold, matcher)?;
    Ok(MetricValue::ratio(IRR, covered.len(), gold.len()))
}

/// Answer accuracy and coverage from one injective matching, so both share
/// the numerator `|A*|`.
pub fn answer_metrics<S: AsRef<str>, G: AsRef<str>>(
    generated: &[S],
    gold_answers: &[G],
    matcher: &Matcher,
) -> Result<(MetricValue, MetricValue), MetricError> {
    if gold_answers.is_empty() {
        return Err(MetricError::UndefinedMetric(AC));
    }
    let gold = GoldUnit::from_answers(gold_answers);
    let matched = match_units(generated, &gold, matcher)?.matched();
    Ok((
        MetricValue::ratio(AA, matched, generated.len()),
        MetricValue::ratio(AC, matched, gold.len()),
    ))
}

/// Share of generated answers that match a gold answer; 0 with the
/// empty-output flag when nothing was generated.
pub fn answer_accuracy<S: AsRef<str>, G: AsRef<str>>(
    generated: &[S],
    gold_answers: &[G],
    matcher: &Matcher,
) -> Result<MetricValue, MetricError> {
    let gold = GoldUnit::from_answers(gold_answers);
    let matched = match_units(generated, &gold, matcher)?.matched();
    Ok(MetricValue::ratio(AA, matched, generated.len()))
}

/// Share of gold answers that were generated.
pub fn answer_coverage<S: AsRef<str>, G: AsRef<str>>(
    generated: &[S],
    gold_answers: &[G],
    matcher: &Matcher,
) -> Result<MetricValue, MetricError> {
    Ok(answer_metrics(generated, gold_answers, matcher)?.1)
}

fn require_gold<G>(gold: &[G], name: &'static str) -> Result<(), MetricError> {
    if gold.is_empty() {
        Err(MetricError::UndefinedMetric(name))
    } else {
        Ok(())
    }
}

pub fn exact_match<G: AsRef<str>>(
    prediction: &str,
    gold_answers: &[G],
) -> Result<f64, MetricError> {
    require_gold(gold_answers, EM)?;
    let p = normalize_answer(prediction);
    Ok(
        if gold_answers
            .iter()
            .any(|g| normalize_answer(g.as_ref()) == p)
        {
            1.0
        } else {
            0.0
        },
    )
}

fn f1_pair(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best bag-of-tokens F1 over the gold answers.
pub fn token_f1<G: AsRef<str>>(prediction: &str, gold_answers: &[G]) -> Result<f64, MetricError> {
    require_gold(gold_answers, F1)?;
    let p = answer_tokens(prediction);
    Ok(gold_answers
        .iter()
        .map(|g| f1_pair(&p, &answer_tokens(g.as_ref())))
        .fold(0.0, f64::max))
}

pub fn recall_name(k: usize) -> String {
    format!("r@{k}")
}

/// Share of gold passage ids present among the top `k` fused chunks. A gold
/// id matches a chunk id or the document a chunk belongs to.
pub fn recall_at_k<G: AsRef<str>>(
    fused: &FusedRanking,
    gold_passage_ids: &[G],
    k: usize,
    doc_of: impl Fn(&str) -> Option<String>,
) -> Result<MetricValue, MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidInput("k must be positive".into()));
    }
    let gold: BTreeSet<&str> = gold_passage_ids.iter().map(|g| g.as_ref()).collect();
    if gold.is_empty() {
        return Err(MetricError::UndefinedMetric("recall_at_k"));
    }
    let mut found = BTreeSet::new();
    for e in fused.entries.iter().take(k) {
        let id = e.chunk_id.as_str();
        if gold.contains(id) {
            found.insert(id);
        }
        if let Some(d) = doc_of(id) {
            if let Some(g) = gold.get(d.as_str()) {
                found.insert(*g);
            }
        }
    }
    Ok(MetricValue::ratio(recall_name(k), found.len(), gold.len()))
}
