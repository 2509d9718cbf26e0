//! Documents, chunks and QA datasets, plus their line-delimited JSON formats.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_CHARS: usize = 1200;
pub const DEFAULT_OVERLAP_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub body: String,
    /// Half-open character range into the document body.
    pub char_span: (usize, usize),
}

impl Chunk {
    pub fn make_id(doc_id: &str, ordinal: usize) -> String {
        format!("{doc_id}#{ordinal}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactualUnit {
    pub id: String,
    pub statement: String,
    #[serde(rename = "intent", default, skip_serializing_if = "Option::is_none")]
    pub intent_label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    #[serde(default)]
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub factual_units: Vec<FactualUnit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_passage_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    #[serde(default)]
    pub domain: String,
    pub question: String,
    #[serde(flatten)]
    pub gold: GoldAnnotation,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty question id".into());
        }
        if self.question.trim().is_empty() {
            return Err(format!("question {} has an empty question text", self.id));
        }
        let mut seen = HashSet::new();
        for unit in &self.gold.factual_units {
            if !seen.insert(unit.id.as_str()) {
                return Err(format!(
                    "question {} repeats factual unit id {:?}",
                    self.id, unit.id
                ));
            }
            if unit.statement.trim().is_empty() {
                return Err(format!(
                    "question {} has empty factual unit {:?}",
                    self.id, unit.id
                ));
            }
        }
        Ok(())
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

/// Write one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let rows: Vec<(usize, Document)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut docs = Vec::with_capacity(rows.len());
    for (line, doc) in rows {
        if doc.id.is_empty() {
            return Err(CorpusError::Validation(format!(
                "line {line}: empty document id"
            )));
        }
        if doc.body.is_empty() {
            return Err(CorpusError::Validation(format!(
                "line {line}: document {:?} has an empty body",
                doc.id
            )));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::Validation(format!(
                "line {line}: duplicate document id {:?}",
                doc.id
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_chunks(path: &Path) -> Result<Vec<Chunk>, CorpusError> {
    let rows: Vec<(usize, Chunk)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut chunks = Vec::with_capacity(rows.len());
    for (line, chunk) in rows {
        if !seen.insert(chunk.id.clone()) {
            return Err(CorpusError::Validation(format!(
                "line {line}: duplicate chunk id {:?}",
                chunk.id
            )));
        }
        chunks.push(chunk);
    }
    Ok(chunks)
}

/// Parse a QA dataset without validating gold annotations. Evaluation uses
/// this so that one bad record is reported as a failure instead of aborting.
pub fn read_qa_records(path: &Path) -> Result<Vec<QuestionRecord>, CorpusError> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

pub fn load_qa_dataset(path: &Path) -> Result<Vec<QuestionRecord>, CorpusError> {
    let rows: Vec<(usize, QuestionRecord)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(rows.len());
    for (line, record) in rows {
        record
            .validate()
            .map_err(|msg| CorpusError::Validation(format!("line {line}: {msg}")))?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::Validation(format!(
                "line {line}: duplicate question id {:?}",
                record.id
            )));
        }
        records.push(record);
    }
    Ok(records)
}

fn paragraph_break_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[ \t\r]*\n\s*").expect("static regex"))
}

/// Split a document into chunks.
///
/// Every paragraph that fits within `max_chars` becomes its own chunk
/// (trailing separator included, so spans tile the body). Longer paragraphs
/// are cut by a sliding window of `max_chars` characters whose consecutive
/// windows overlap by exactly `overlap_chars`; a window ends at the last
/// sentence break inside it when one exists past the overlap, otherwise it is
/// a hard cut. Offsets count Unicode scalar values.
///
/// Panics if `max_chars == 0` or `overlap_chars >= max_chars`.
pub fn chunk_document(doc: &Document, max_chars: usize, overlap_chars: usize) -> Vec<Chunk> {
    assert!(max_chars > 0, "max_chars must be positive");
    assert!(
        overlap_chars < max_chars,
        "overlap_chars must be smaller than max_chars"
    );
    let body = doc.body.as_str();
    if body.is_empty() {
        return Vec::new();
    }
    // byte offset of every char, plus the end sentinel
    let mut byte_at: Vec<usize> = body.char_indices().map(|(b, _)| b).collect();
    byte_at.push(body.len());
    let n_chars = byte_at.len() - 1;
    let char_of = |byte: usize| byte_at.partition_point(|&b| b < byte);

    let mut para_starts = vec![0usize];
    for m in paragraph_break_re().find_iter(body) {
        if m.start() == 0 {
            continue;
        }
        let c = char_of(m.end());
        if c < n_chars {
            para_starts.push(c);
        }
    }
    para_starts.dedup();
    para_starts.push(n_chars);

    let chars: Vec<char> = body.chars().collect();
    let mut spans = Vec::new();
    for w in para_starts.windows(2) {
        window_paragraph(&chars, w[0], w[1], max_chars, overlap_chars, &mut spans);
    }

    spans
        .into_iter()
        .enumerate()
        .map(|(ordinal, (s, e))| Chunk {
            id: Chunk::make_id(&doc.id, ordinal),
            doc_id: doc.id.clone(),
            ordinal,
            body: body[byte_at[s]..byte_at[e]].to_string(),
            char_span: (s, e),
        })
        .collect()
}

fn window_paragraph(
    chars: &[char],
    start: usize,
    end: usize,
    max_chars: usize,
    overlap: usize,
    spans: &mut Vec<(usize, usize)>,
) {
    let mut s = start;
    loop {
        if end - s <= max_chars {
            spans.push((s, end));
            return;
        }
        let hard = s + max_chars;
        let cut = last_sentence_break(chars, s + overlap + 1, hard).unwrap_or(hard);
        spans.push((s, cut));
        s = cut - overlap;
    }
}

/// Largest position `p` in `[lo, hi]` that directly follows sentence-ending
/// punctuation and whitespace.
fn last_sentence_break(chars: &[char], lo: usize, hi: usize) -> Option<usize> {
    (lo.max(2)..=hi)
        .rev()
        .find(|&p| matches!(chars[p - 2], '.' | '!' | '?') && chars[p - 1].is_whitespace())
}
