//! Chat-completion providers: a remote HTTP client and a scripted mock that
//! replays recorded transcripts keyed by prompt fingerprint.

mod remote;
mod scripted;
mod transcript;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use remote::RemoteLlm;
pub use scripted::ScriptedLlm;
pub use transcript::{
    read_transcript, write_transcript, RecordingLlm, TranscriptRecord, TranscriptSink,
};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("LLM request failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("LLM backend rejected the request: {0}")]
    Rejected(String),
    #[error("scripted LLM has no response for {call_kind} prompt {prompt_hash}")]
    Unscripted {
        call_kind: CallKind,
        prompt_hash: String,
    },
    #[error("LLM configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Hypotheses,
    Decompose,
    Split,
    Repair,
    Answer,
    Judge,
}

impl std::fmt::Display for CallKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CallKind::Hypotheses => "hypotheses",
            CallKind::Decompose => "decompose",
            CallKind::Split => "split",
            CallKind::Repair => "repair",
            CallKind::Answer => "answer",
            CallKind::Judge => "judge",
        };
        f.write_str(s)
    }
}

/// One system + user exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub question_id: String,
    pub call_kind: CallKind,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Canonical single-string rendering, as stored in transcripts.
    pub fn prompt_text(&self) -> String {
        prompt_text(&self.system, &self.user)
    }

    pub fn fingerprint(&self) -> String {
        prompt_fingerprint(&self.system, &self.user)
    }
}

pub fn prompt_text(system: &str, user: &str) -> String {
    format!("[system]\n{system}\n[user]\n{user}")
}

/// SHA-256 of the canonical prompt text; the key scripted responses use.
pub fn prompt_fingerprint(system: &str, user: &str) -> String {
    hex::encode(Sha256::digest(prompt_text(system, user).as_bytes()))
}

pub trait LlmProvider: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmBackend {
    RemoteHttp,
    ScriptedMock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmProviderConfig {
    pub backend: LlmBackend,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Sampling temperature for hypothesis generation. Calls whose output
    /// is parsed (decomposition, answers, judging) always use 0.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    /// Transcript file replayed by the scripted backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    #[serde(default = "default_llm_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "crate::embedding::default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "crate::embedding::default_backoff_ms")]
    pub initial_backoff_ms: u64,
}

fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_llm_in_flight() -> usize {
    4
}

impl LlmProviderConfig {
    pub fn scripted(script_path: Option<PathBuf>) -> Self {
        Self {
            backend: LlmBackend::ScriptedMock,
            model_name: "scripted".into(),
            endpoint: None,
            temperature: default_temperature(),
            max_output_tokens: default_max_tokens(),
            script_path,
            max_in_flight: default_llm_in_flight(),
            max_attempts: crate::embedding::default_attempts(),
            initial_backoff_ms: crate::embedding::default_backoff_ms(),
        }
    }

    pub fn remote(model_name: impl Into<String>, endpoint: Option<String>) -> Self {
        Self {
            backend: LlmBackend::RemoteHttp,
            model_name: model_name.into(),
            endpoint,
            script_path: None,
            ..Self::scripted(None)
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config(format!(
                "temperature must be within [0, 2], got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::Config(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Instantiate the backend. The remote client reads `LLM_BASE_URL`
    /// (when no endpoint is configured) and `LLM_API_KEY`.
    pub fn build(&self) -> Result<Box<dyn LlmProvider>, LlmError> {
        self.validate()?;
        Ok(match self.backend {
            LlmBackend::ScriptedMock => {
                let mut s = match &self.script_path {
                    Some(p) => ScriptedLlm::from_transcript(p)?,
                    None => ScriptedLlm::new(),
                };
                s.set_model_name(self.model_name.clone());
                Box::new(s)
            }
            LlmBackend::RemoteHttp => Box::new(RemoteLlm::from_config(self.clone())?),
        })
    }
}
