use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::corpus::FactualUnit;
use crate::llm::{CallKind, ChatRequest, LlmProvider, LlmProviderConfig};
use crate::prompts::templates;
use crate::text::normalize_answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    NormalizedExact,
    Containment,
    LlmJudge,
}

impl MatcherKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MatcherKind::NormalizedExact => "normalized_exact",
            MatcherKind::Containment => "containment",
            MatcherKind::LlmJudge => "llm_judge",
        }
    }
}

impl fmt::Display for MatcherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatcherKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "normalized_exact" | "exact" => Ok(MatcherKind::NormalizedExact),
            "containment" | "contains" => Ok(MatcherKind::Containment),
            "llm_judge" | "judge" => Ok(MatcherKind::LlmJudge),
            other => Err(format!("unknown matcher {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub kind: MatcherKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_llm: Option<LlmProviderConfig>,
}

impl MatcherConfig {
    pub fn new(kind: MatcherKind) -> Self {
        Self {
            kind,
            judge_llm: None,
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.kind == MatcherKind::LlmJudge && self.judge_llm.is_none() {
            return Err(MetricError::InvalidInput(
                "llm_judge matcher needs a judge LLM config".into(),
            ));
        }
        Ok(())
    }
}

/// Decides whether a candidate text aligns with a gold text.
#[derive(Clone, Copy)]
pub enum Matcher<'a> {
    NormalizedExact,
    /// Normalized gold appears in the normalized candidate on word boundaries.
    Containment,
    Judge(&'a dyn LlmProvider),
}

impl fmt::Debug for Matcher<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind().as_str())
    }
}

pub fn judge_request(candidate: &str, gold: &str) -> ChatRequest {
    let (system, user) = templates()
        .judge
        .render(&[("gold", gold), ("candidate", candidate)]);
    ChatRequest {
        question_id: String::new(),
        call_kind: CallKind::Judge,
        system,
        user,
        temperature: 0.0,
        max_tokens: 8,
    }
}

impl Matcher<'_> {
    pub fn kind(&self) -> MatcherKind {
        match self {
            Matcher::NormalizedExact => MatcherKind::NormalizedExact,
            Matcher::Containment => MatcherKind::Containment,
            Matcher::Judge(_) => MatcherKind::LlmJudge,
        }
    }

    pub fn accepts(&self, candidate: &str, gold: &str) -> Result<bool, MetricError> {
        match self {
            Matcher::NormalizedExact => {
                let g = normalize_answer(gold);
                Ok(!g.is_empty() && g == normalize_answer(candidate))
            }
            Matcher::Containment => {
                let g = normalize_answer(gold);
                if g.is_empty() {
                    return Ok(false);
                }
                let c = normalize_answer(candidate);
                Ok(format!(" {c} ").contains(&format!(" {g} ")))
            }
            Matcher::Judge(llm) => {
                let reply = llm.complete(&judge_request(candidate, gold))?;
                let word = reply
                    .trim()
                    .trim_start_matches(|c: char| !c.is_alphanumeric());
                Ok(word.to_ascii_lowercase().starts_with("yes"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldUnit {
    pub id: String,
    pub text: String,
}

impl GoldUnit {
    pub fn from_factual(units: &[FactualUnit]) -> Vec<GoldUnit> {
        units
            .iter()
            .map(|u| GoldUnit {
                id: u.id.clone(),
                text: u.statement.clone(),
            })
            .collect()
    }

    /// Gold answers get positional ids `a1`, `a2`, ...
    pub fn from_answers<S: AsRef<str>>(answers: &[S]) -> Vec<GoldUnit> {
        answers
            .iter()
            .enumerate()
            .map(|(i, a)| GoldUnit {
                id: format!("a{}", i + 1),
                text: a.as_ref().to_string(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub candidate: String,
    pub gold_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub matched_gold_ids: BTreeSet<String>,
    pub verdicts: Vec<Verdict>,
}

impl MatchOutcome {
    pub fn matched(&self) -> usize {
        self.matched_gold_ids.len()
    }
}

pub(crate) fn check_unique(gold: &[GoldUnit]) -> Result<(), MetricError> {
    let mut seen = HashSet::new();
    for g in gold {
        if !seen.insert(g.id.as_str()) {
            return Err(MetricError::DuplicateGoldId(g.id.clone()));
        }
    }
    Ok(())
}

/// Greedy injective assignment: candidates are visited in order and each
/// takes the first still-unmatched gold unit the matcher accepts.
pub fn match_units<S: AsRef<str>>(
    candidates: &[S],
    gold: &[GoldUnit],
    matcher: &Matcher,
) -> Result<MatchOutcome, MetricError> {
    check_unique(gold)?;
    let mut out = MatchOutcome::default();
    for c in candidates {
        let c = c.as_ref();
        let mut hit = None;
        for g in gold {
            if out.matched_gold_ids.contains(&g.id) {
                continue;
            }
            if matcher.accepts(c, &g.text)? {
                hit = Some(g.id.clone());
                break;
            }
        }
        if let Some(id) = &hit {
            out.matched_gold_ids.insert(id.clone());
        }
        out.verdicts.push(Verdict {
            candidate: c.to_string(),
            gold_id: hit,
        });
    }
    Ok(out)
}

/// Gold units accepted by at least one candidate.
pub fn covered_units<S: AsRef<str>>(
    candidates: &[S],
    gold: &[GoldUnit],
    matcher: &Matcher,
) -> Result<BTreeSet<String>, MetricError> {
    check_unique(gold)?;
    let mut covered = BTreeSet::new();
    for g in gold {
        for c in candidates {
            if matcher.accepts(c.as_ref(), &g.text)? {
                covered.insert(g.id.clone());
                break;
            }
        }
    }
    Ok(covered)
}
