use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{CallKind, ChatRequest, LlmError, LlmProvider};

/// One recorded LLM exchange; the line format of transcript files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub question_id: String,
    pub call_kind: CallKind,
    pub prompt_hash: String,
    pub prompt: String,
    pub response: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl TranscriptRecord {
    pub fn new(request: &ChatRequest, response: impl Into<String>) -> Self {
        Self {
            question_id: request.question_id.clone(),
            call_kind: request.call_kind,
            prompt_hash: request.fingerprint(),
            prompt: request.prompt_text(),
            response: response.into(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }
}

pub fn read_transcript(path: &Path) -> std::io::Result<Vec<TranscriptRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {e}", i + 1),
            )
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_transcript(path: &Path, records: &[TranscriptRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Append-only transcript file shared by concurrent workers.
pub struct TranscriptSink {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl TranscriptSink {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, records: &[TranscriptRecord]) -> std::io::Result<()> {
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        for r in records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

/// Wraps a provider and keeps every successful exchange.
pub struct RecordingLlm<'a> {
    inner: &'a dyn LlmProvider,
    records: Mutex<Vec<TranscriptRecord>>,
}

impl<'a> RecordingLlm<'a> {
    pub fn new(inner: &'a dyn LlmProvider) -> Self {
        Self {
            inner,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn into_records(self) -> Vec<TranscriptRecord> {
        self.records.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl LlmProvider for RecordingLlm<'_> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(request)?;
        self.records
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(TranscriptRecord::new(request, response.clone()));
        Ok(response)
    }
}
