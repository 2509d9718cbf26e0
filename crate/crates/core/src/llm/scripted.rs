use std::collections::HashMap;
use std::path::Path;

use super::{read_transcript, ChatRequest, LlmError, LlmProvider};

/// Deterministic LLM: answers from a fingerprint → response table.
#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    responses: HashMap<String, String>,
    fallback: Option<String>,
    model_name: String,
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self {
            model_name: "scripted".into(),
            ..Default::default()
        }
    }

    /// Replay a transcript file. Later records override earlier ones with
    /// the same prompt hash.
    pub fn from_transcript(path: &Path) -> Result<Self, LlmError> {
        let records = read_transcript(path)
            .map_err(|e| LlmError::Config(format!("cannot read script {}: {e}", path.display())))?;
        let mut s = Self::new();
        for r in records {
            s.responses.insert(r.prompt_hash, r.response);
        }
        Ok(s)
    }

    pub fn set_model_name(&mut self, name: String) {
        self.model_name = name;
    }

    pub fn insert(&mut self, prompt_hash: impl Into<String>, response: impl Into<String>) {
        self.responses.insert(prompt_hash.into(), response.into());
    }

    pub fn respond(mut self, prompt_hash: impl Into<String>, response: impl Into<String>) -> Self {
        self.insert(prompt_hash, response);
        self
    }

    /// Response for prompts that are not in the table.
    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl LlmProvider for ScriptedLlm {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let hash = request.fingerprint();
        match self.responses.get(&hash).or(self.fallback.as_ref()) {
            Some(r) => Ok(r.clone()),
            None => Err(LlmError::Unscripted {
                call_kind: request.call_kind,
                prompt_hash: hash,
            }),
        }
    }
}
